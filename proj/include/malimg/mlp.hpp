#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <vector>

#include "malimg/classifier.hpp"

namespace malimg {

struct MlpParams {
    std::vector<int> hidden{100, 100, 100, 20};
    double l2_alpha = 1e-4;
    double learning_rate = 0.01;
    int epochs = 30;
    int batch_size = 32;
    std::uint64_t seed = 42;
};

struct MlpGradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
};

/// Fully connected ReLU network with a softmax output layer.
///
/// Loss is mean cross-entropy over the batch plus l2_alpha * sum(W^2) over
/// weight matrices (biases are not penalised).
class MlpModel final : public Classifier {
public:
    /// Glorot-uniform weights, zero biases, drawn from `seed`.
    MlpModel(std::size_t inputs, int num_classes, const MlpParams& params);

    /// Rebuilds a model from stored parameters; params.hidden is taken from the shapes.
    static MlpModel restore(MlpParams params, std::vector<Eigen::MatrixXd> weights,
                            std::vector<Eigen::VectorXd> biases);

    ModelKind kind() const override { return ModelKind::mlp; }
    int num_classes() const override { return static_cast<int>(biases_.back().size()); }
    std::size_t input_dims() const override { return static_cast<std::size_t>(weights_.front().cols()); }
    Prediction predict(std::span<const float> x) const override;
    std::vector<Prediction> predict_all(const FeatureMatrix& x, int workers = 1) const override;
    void save_payload(BinaryWriter& w) const override;

    /// Softmax outputs, one column per sample of `inputs` (features x batch).
    Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const;

    /// Loss on a batch; fills `grads` with its gradient when non-null.
    double loss(const Eigen::MatrixXd& inputs, std::span<const int> labels,
                MlpGradients* grads = nullptr) const;

    void step(const MlpGradients& grads, double learning_rate);

    std::vector<int> layer_sizes() const;
    const MlpParams& params() const noexcept { return params_; }
    std::vector<Eigen::MatrixXd>& weights() noexcept { return weights_; }
    std::vector<Eigen::VectorXd>& biases() noexcept { return biases_; }
    const std::vector<Eigen::MatrixXd>& weights() const noexcept { return weights_; }
    const std::vector<Eigen::VectorXd>& biases() const noexcept { return biases_; }

private:
    MlpModel() = default;

    MlpParams params_;
    std::vector<Eigen::MatrixXd> weights_;  // layer l: out x in
    std::vector<Eigen::VectorXd> biases_;
};

/// Rows of `x` (picked by `rows`) as columns of a double matrix.
Eigen::MatrixXd to_batch(const FeatureMatrix& x, std::span<const std::size_t> rows);

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Mini-batch gradient descent with a fixed learning rate; batches are drawn
/// from a per-epoch shuffle seeded by params.seed.
/// Throws DivergenceError naming the epoch if the loss becomes non-finite.
MlpModel mlp_fit(const FeatureMatrix& x, std::span<const int> y, int num_classes,
                 const MlpParams& params = {}, const EpochCallback& on_epoch = {});

}  // namespace malimg
