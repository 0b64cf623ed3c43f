#include "malimg/mlp.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "malimg/binary_io.hpp"
#include "malimg/errors.hpp"
#include "malimg/parallel.hpp"
#include "malimg/rng.hpp"

namespace malimg {

namespace {

// Column-wise softmax, in place.
void softmax_columns(Eigen::MatrixXd& z) {
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
        auto col = z.col(c);
        col.array() -= col.maxCoeff();
        col = col.array().exp().matrix();
        col /= col.sum();
    }
}

}  // namespace

MlpModel::MlpModel(std::size_t inputs, int num_classes, const MlpParams& params) : params_(params) {
    if (inputs == 0) throw UsageError("mlp: no input features");
    if (num_classes < 2) throw UsageError("mlp: need at least two classes");
    std::vector<int> sizes{static_cast<int>(inputs)};
    for (int h : params_.hidden) {
        if (h < 1) throw UsageError("mlp: hidden layer sizes must be positive");
        sizes.push_back(h);
    }
    sizes.push_back(num_classes);

    Rng rng(params_.seed);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const int in = sizes[l];
        const int out = sizes[l + 1];
        const double bound = std::sqrt(6.0 / (in + out));
        Eigen::MatrixXd w(out, in);
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
            for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-bound, bound);
        }
        weights_.push_back(std::move(w));
        biases_.push_back(Eigen::VectorXd::Zero(out));
    }
}

MlpModel MlpModel::restore(MlpParams params, std::vector<Eigen::MatrixXd> weights,
                           std::vector<Eigen::VectorXd> biases) {
    if (weights.empty() || weights.size() != biases.size()) throw FormatError("mlp: layer count mismatch");
    params.hidden.clear();
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].rows() != biases[l].size() || (l > 0 && weights[l].cols() != weights[l - 1].rows())) {
            throw FormatError("mlp: inconsistent layer shapes");
        }
        if (l + 1 < weights.size()) params.hidden.push_back(static_cast<int>(weights[l].rows()));
    }
    MlpModel m;
    m.params_ = std::move(params);
    m.weights_ = std::move(weights);
    m.biases_ = std::move(biases);
    return m;
}

std::vector<int> MlpModel::layer_sizes() const {
    std::vector<int> sizes{static_cast<int>(weights_.front().cols())};
    for (const auto& w : weights_) sizes.push_back(static_cast<int>(w.rows()));
    return sizes;
}

Eigen::MatrixXd MlpModel::forward(const Eigen::MatrixXd& inputs) const {
    Eigen::MatrixXd a = inputs;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        Eigen::MatrixXd z = weights_[l] * a;
        z.colwise() += biases_[l];
        if (l + 1 < weights_.size()) {
            a = z.cwiseMax(0.0);
        } else {
            softmax_columns(z);
            a = std::move(z);
        }
    }
    return a;
}

double MlpModel::loss(const Eigen::MatrixXd& inputs, std::span<const int> labels, MlpGradients* grads) const {
    const Eigen::Index batch = inputs.cols();
    if (static_cast<std::size_t>(batch) != labels.size() || batch == 0) {
        throw UsageError("mlp: batch and label counts differ");
    }
    const std::size_t layers = weights_.size();
    std::vector<Eigen::MatrixXd> acts;  // acts[l] is the input to layer l
    acts.reserve(layers + 1);
    acts.push_back(inputs);
    Eigen::MatrixXd logits;
    for (std::size_t l = 0; l < layers; ++l) {
        Eigen::MatrixXd z = weights_[l] * acts.back();
        z.colwise() += biases_[l];
        if (l + 1 < layers) {
            acts.push_back(z.cwiseMax(0.0));
        } else {
            logits = std::move(z);
        }
    }

    double ce = 0.0;
    Eigen::MatrixXd probs = logits;
    for (Eigen::Index c = 0; c < batch; ++c) {
        const double m = logits.col(c).maxCoeff();
        const double lse = m + std::log((logits.col(c).array() - m).exp().sum());
        ce += lse - logits(labels[static_cast<std::size_t>(c)], c);
    }
    softmax_columns(probs);
    double penalty = 0.0;
    for (const auto& w : weights_) penalty += w.squaredNorm();
    const double total = ce / static_cast<double>(batch) + params_.l2_alpha * penalty;

    if (grads) {
        grads->weights.resize(layers);
        grads->biases.resize(layers);
        Eigen::MatrixXd delta = probs;
        for (Eigen::Index c = 0; c < batch; ++c) delta(labels[static_cast<std::size_t>(c)], c) -= 1.0;
        delta /= static_cast<double>(batch);
        for (std::size_t l = layers; l-- > 0;) {
            grads->weights[l] = delta * acts[l].transpose() + 2.0 * params_.l2_alpha * weights_[l];
            grads->biases[l] = delta.rowwise().sum();
            if (l > 0) {
                Eigen::MatrixXd back = weights_[l].transpose() * delta;
                delta = (acts[l].array() > 0.0).select(back, 0.0);
            }
        }
    }
    return total;
}

void MlpModel::step(const MlpGradients& grads, double learning_rate) {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        weights_[l] -= learning_rate * grads.weights[l];
        biases_[l] -= learning_rate * grads.biases[l];
    }
}

Prediction MlpModel::predict(std::span<const float> x) const {
    check_dims(x.size());
    const Eigen::Map<const Eigen::VectorXf> v(x.data(), static_cast<Eigen::Index>(x.size()));
    const Eigen::MatrixXd out = forward(v.cast<double>());
    std::vector<double> p(out.data(), out.data() + out.size());
    Prediction pred;
    pred.label = argmax_lowest(p);
    pred.probabilities = std::move(p);
    return pred;
}

std::vector<Prediction> MlpModel::predict_all(const FeatureMatrix& x, int workers) const {
    check_dims(x.cols);
    constexpr std::size_t kChunk = 64;
    const std::size_t chunks = (x.rows + kChunk - 1) / kChunk;
    std::vector<Prediction> out(x.rows);
    parallel_for(chunks, workers, [&](std::size_t c) {
        const std::size_t lo = c * kChunk;
        const std::size_t hi = std::min(x.rows, lo + kChunk);
        std::vector<std::size_t> rows(hi - lo);
        std::iota(rows.begin(), rows.end(), lo);
        const Eigen::MatrixXd probs = forward(to_batch(x, rows));
        for (std::size_t i = lo; i < hi; ++i) {
            const auto col = probs.col(static_cast<Eigen::Index>(i - lo));
            std::vector<double> p(col.data(), col.data() + col.size());
            out[i].label = argmax_lowest(p);
            out[i].probabilities = std::move(p);
        }
    });
    return out;
}

void MlpModel::save_payload(BinaryWriter& w) const {
    w.f64(params_.l2_alpha);
    w.f64(params_.learning_rate);
    w.i32(params_.epochs);
    w.i32(params_.batch_size);
    w.u64(params_.seed);
    const auto sizes = layer_sizes();
    w.u32(static_cast<std::uint32_t>(sizes.size()));
    for (int s : sizes) w.i32(s);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        w.f64s(std::span<const double>(weights_[l].data(), static_cast<std::size_t>(weights_[l].size())));
        w.f64s(std::span<const double>(biases_[l].data(), static_cast<std::size_t>(biases_[l].size())));
    }
}

Eigen::MatrixXd to_batch(const FeatureMatrix& x, std::span<const std::size_t> rows) {
    Eigen::MatrixXd batch(static_cast<Eigen::Index>(x.cols), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Eigen::Map<const Eigen::VectorXf> r(x.row(rows[i]).data(), static_cast<Eigen::Index>(x.cols));
        batch.col(static_cast<Eigen::Index>(i)) = r.cast<double>();
    }
    return batch;
}

MlpModel mlp_fit(const FeatureMatrix& x, std::span<const int> y, int num_classes, const MlpParams& params,
                 const EpochCallback& on_epoch) {
    check_training_data(x, y, num_classes);
    if (params.epochs < 1 || params.batch_size < 1 || !(params.learning_rate > 0.0)) {
        throw UsageError("mlp: epochs, batch size and learning rate must be positive");
    }
    MlpModel model(x.cols, num_classes, params);
    Rng rng(derive_seed(params.seed, 1));
    std::vector<std::size_t> order(x.rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto batch_size = static_cast<std::size_t>(params.batch_size);
    MlpGradients grads;
    std::vector<int> labels;

    for (int epoch = 1; epoch <= params.epochs; ++epoch) {
        rng.shuffle(std::span(order));
        double sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t lo = 0; lo < order.size(); lo += batch_size) {
            const std::size_t hi = std::min(order.size(), lo + batch_size);
            const std::span<const std::size_t> rows(order.data() + lo, hi - lo);
            labels.clear();
            for (auto r : rows) labels.push_back(y[r]);
            const double l = model.loss(to_batch(x, rows), labels, &grads);
            if (!std::isfinite(l)) {
                throw DivergenceError(epoch, "mlp: loss became non-finite in epoch " + std::to_string(epoch));
            }
            model.step(grads, params.learning_rate);
            sum += l;
            ++batches;
        }
        if (on_epoch) on_epoch(epoch, sum / static_cast<double>(batches));
    }
    return model;
}

}  // namespace malimg
