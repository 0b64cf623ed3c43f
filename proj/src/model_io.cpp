#include "malimg/model_io.hpp"

#include "malimg/binary_io.hpp"
#include "malimg/ensemble.hpp"
#include "malimg/errors.hpp"
#include "malimg/forest.hpp"
#include "malimg/knn.hpp"
#include "malimg/mlp.hpp"

namespace malimg {

namespace {

std::unique_ptr<Classifier> load_knn(BinaryReader& r) {
    KnnParams p;
    p.k = r.i32();
    p.weighting = r.u8() ? Weighting::distance : Weighting::uniform;
    const int classes = r.i32();
    const auto rows = r.u64();
    const auto cols = r.u64();
    if (cols != 0 && rows > r.remaining() / 4 / cols) throw FormatError("knn: truncated payload");
    std::vector<int> labels(rows);
    for (auto& l : labels) l = r.i32();
    FeatureMatrix train(rows, cols);
    r.f32s(train.values);
    return std::make_unique<KnnModel>(std::move(train), std::move(labels), classes, p);
}

std::unique_ptr<Classifier> load_mlp(BinaryReader& r) {
    MlpParams p;
    p.l2_alpha = r.f64();
    p.learning_rate = r.f64();
    p.epochs = r.i32();
    p.batch_size = r.i32();
    p.seed = r.u64();
    const auto n = r.u32();
    if (n < 2 || n > 64) throw FormatError("mlp: implausible layer count");
    std::vector<int> sizes(n);
    for (auto& s : sizes) {
        s = r.i32();
        if (s < 1) throw FormatError("mlp: bad layer size");
    }
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const auto rows = static_cast<std::size_t>(sizes[l + 1]);
        const auto cols = static_cast<std::size_t>(sizes[l]);
        if (rows * cols > r.remaining() / 8) throw FormatError("mlp: truncated payload");
        Eigen::MatrixXd w(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        r.f64s(std::span<double>(w.data(), rows * cols));
        Eigen::VectorXd b(static_cast<Eigen::Index>(rows));
        r.f64s(std::span<double>(b.data(), rows));
        weights.push_back(std::move(w));
        biases.push_back(std::move(b));
    }
    return std::make_unique<MlpModel>(MlpModel::restore(p, std::move(weights), std::move(biases)));
}

std::unique_ptr<ForestModel> load_forest(BinaryReader& r) {
    ForestParams p;
    p.n_trees = r.i32();
    p.max_depth = r.i32();
    p.seed = r.u64();
    p.max_features = r.i32();
    p.bootstrap = r.u8() != 0;
    const int classes = r.i32();
    const auto dims = r.u64();
    const auto n_trees = r.u32();
    std::vector<DecisionTree> trees(n_trees);
    for (auto& t : trees) {
        const auto n_nodes = r.u32();
        if (n_nodes == 0 || n_nodes > r.remaining() / 20) throw FormatError("forest: bad node count");
        t.nodes.resize(n_nodes);
        for (auto& node : t.nodes) {
            node.feature = r.i32();
            node.threshold = r.f32();
            node.left = r.i32();
            node.right = r.i32();
            node.label = r.i32();
            const bool leaf = node.feature < 0;
            if (node.label < 0 || node.label >= classes ||
                (!leaf && (static_cast<std::uint64_t>(node.feature) >= dims || node.left <= 0 || node.right <= 0 ||
                           static_cast<std::uint32_t>(node.left) >= n_nodes ||
                           static_cast<std::uint32_t>(node.right) >= n_nodes))) {
                throw FormatError("forest: node out of range");
            }
        }
    }
    return std::make_unique<ForestModel>(std::move(trees), classes, dims, p);
}

std::vector<std::uint8_t> read_blob(BinaryReader& r) {
    const auto n = r.u64();
    if (n > r.remaining()) throw FormatError("nested model truncated");
    std::vector<std::uint8_t> blob(n);
    for (auto& b : blob) b = r.u8();
    return blob;
}

}  // namespace

std::vector<std::uint8_t> save_model(const Classifier& model) {
    BinaryWriter w;
    w.magic("MIMM");
    w.u32(kModelFormatVersion);
    w.u32(static_cast<std::uint32_t>(model.kind()));
    model.save_payload(w);
    return w.take();
}

std::unique_ptr<Classifier> load_model(std::span<const std::uint8_t> bytes) {
    BinaryReader r(bytes);
    r.expect_magic("MIMM");
    if (r.u32() != kModelFormatVersion) throw FormatError("model: unsupported container version");
    const auto kind = static_cast<ModelKind>(r.u32());
    std::unique_ptr<Classifier> model;
    switch (kind) {
        case ModelKind::knn: model = load_knn(r); break;
        case ModelKind::mlp: model = load_mlp(r); break;
        case ModelKind::forest: model = load_forest(r); break;
        case ModelKind::vote: {
            const auto n = r.u32();
            std::vector<std::unique_ptr<Classifier>> members;
            for (std::uint32_t i = 0; i < n; ++i) members.push_back(load_model(read_blob(r)));
            model = std::make_unique<VoteEnsemble>(std::move(members));
            break;
        }
        case ModelKind::stacked: {
            const auto n = r.u32();
            std::vector<std::unique_ptr<Classifier>> members;
            std::vector<OutputKind> kinds;
            for (std::uint32_t i = 0; i < n; ++i) {
                kinds.push_back(r.u8() ? OutputKind::label : OutputKind::probabilities);
                members.push_back(load_model(read_blob(r)));
            }
            const auto meta_blob = read_blob(r);
            BinaryReader meta_reader(meta_blob);
            meta_reader.expect_magic("MIMM");
            meta_reader.u32();
            if (static_cast<ModelKind>(meta_reader.u32()) != ModelKind::forest) {
                throw FormatError("stacked: meta model is not a forest");
            }
            auto meta = load_forest(meta_reader);
            model = std::make_unique<StackedEnsemble>(std::move(members), std::move(kinds), std::move(*meta));
            break;
        }
        default:
            throw FormatError("model: unknown kind tag");
    }
    if (r.remaining() != 0) throw FormatError("model: trailing bytes after payload");
    return model;
}

void save_model_file(const std::filesystem::path& path, const Classifier& model) {
    write_all(path.string(), save_model(model));
}

std::unique_ptr<Classifier> load_model_file(const std::filesystem::path& path) {
    return load_model(read_all(path.string()));
}

}  // namespace malimg
