#pragma once

// Residual MLP engine: batched forward pass, reverse-mode gradient, Adam and a
// seeded mini-batch trainer.
//
// Topology: `blocks` residual blocks operating in the input space, each computing
// x + W_out tanh(... tanh(W_1 x + b_1) ...) + b_out with `layers_per_block` hidden
// layers of `width` neurons. When output_dim differs from input_dim a final linear
// head maps input_dim -> output_dim.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "critsamp/common.hpp"

namespace critsamp {

enum class Activation { tanh };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);

struct NetArchitecture {
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    std::size_t blocks = 1;
    std::size_t layers_per_block = 3;
    std::size_t width = 20;
    Activation activation = Activation::tanh;

    void validate() const;
    bool has_head() const { return output_dim != input_dim; }
    bool operator==(const NetArchitecture&) const = default;
};

/// Offsets of one affine layer inside the flat parameter array.
struct LayerSlot {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t weight = 0;  // row-major out x in
    std::size_t bias = 0;
};

class ParamLayout {
public:
    explicit ParamLayout(const NetArchitecture& arch);

    const NetArchitecture& arch() const { return arch_; }
    std::size_t size() const { return total_; }
    std::span<const LayerSlot> layers() const { return layers_; }
    /// Layers of block b (layers_per_block hidden + 1 output layer).
    std::span<const LayerSlot> block(std::size_t b) const;
    const LayerSlot* head() const { return arch_.has_head() ? &layers_.back() : nullptr; }

private:
    NetArchitecture arch_;
    std::vector<LayerSlot> layers_;
    std::size_t total_ = 0;
};

struct NetParams {
    std::vector<double> values;

    bool operator==(const NetParams&) const = default;
};

/// Fan-in scaled uniform weights U(-1/sqrt(in), 1/sqrt(in)), zero biases.
NetParams init_params(const NetArchitecture& arch, std::uint64_t seed);
NetParams zero_params(const NetArchitecture& arch);

/// Activation caches for one batch; reused across steps to avoid allocation.
class Workspace {
public:
    void prepare(const ParamLayout& layout, std::size_t batch);

    std::size_t batch() const { return batch_; }
    std::span<const double> output() const { return {out_.data(), batch_ * out_dim_}; }

private:
    friend class Network;
    NetArchitecture arch_{};
    std::size_t batch_ = 0;
    std::size_t out_dim_ = 0;
    std::vector<std::vector<double>> block_in_;  // blocks + 1 entries (last = block output)
    std::vector<std::vector<double>> hidden_;    // blocks * layers_per_block entries
    std::vector<double> out_;
    std::vector<double> g_state_, g_hidden_a_, g_hidden_b_, g_tmp_, d_out_;
};

/// Stateless evaluator over an architecture; parameters are passed per call.
class Network {
public:
    explicit Network(const NetArchitecture& arch) : layout_(arch) {}

    const NetArchitecture& arch() const { return layout_.arch(); }
    const ParamLayout& layout() const { return layout_; }

    /// Forward pass for a row-major batch X (batch x input_dim); keeps caches in ws.
    void forward(std::span<const double> params, std::span<const double> X, std::size_t batch,
                 Workspace& ws) const;

    /// Accumulates d(loss)/d(params) into grad given d(loss)/d(output) for the batch
    /// last run through forward() with the same workspace.
    void backward(std::span<const double> params, std::span<const double> d_out, Workspace& ws,
                  std::span<double> grad) const;

    /// Convenience single-input evaluation.
    State evaluate(std::span<const double> params, std::span<const double> x) const;

    /// sum over the batch of ||f(x) - y||^2 / batch, with its gradient scaled by `scale`
    /// accumulated into grad. Returns the (unscaled) mean loss.
    double mse_accumulate(std::span<const double> params, std::span<const double> X,
                          std::span<const double> Y, std::size_t batch, double scale,
                          std::span<double> grad, Workspace& ws) const;

private:
    ParamLayout layout_;
};

State net_forward(const NetArchitecture& arch, const NetParams& params,
                  std::span<const double> x);

/// One (input, target) example.
struct Example {
    State x;
    State y;
};

/// Exact gradient of (1/|B|) sum ||f(x) - y||^2.
std::vector<double> net_gradient(const NetArchitecture& arch, const NetParams& params,
                                 std::span<const Example> batch);

// -------------------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t step = 0;

    void reset(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
        step = 0;
    }
    bool operator==(const AdamState&) const = default;
};

/// Bias-corrected Adam update in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& cfg, double lr);

// -------------------------------------------------------------------------------------
// Training

struct TrainConfig {
    std::size_t epochs = 150;
    std::size_t batch_size = 10;
    double lr_initial = 1e-3;
    double lr_final = 1e-6;
    AdamConfig adam;
    std::uint64_t seed = 0;
    /// Weight of an auxiliary loss term (consistency loss).
    double consistency_weight = 0.0;

    void validate() const;
    /// Geometric per-epoch decay from lr_initial to lr_final.
    double learning_rate(std::size_t epoch) const;
};

/// Everything an objective needs to evaluate one mini-batch.
struct BatchContext {
    const Network& net;
    std::span<const double> params;
    std::span<double> grad;
    Workspace& ws;
    std::size_t epoch;
    std::size_t batch_index;
    std::size_t num_batches;
};

/// Data term of a training run. Examples are addressed by index so that mini-batches
/// are shuffles of [0, size()).
class Objective {
public:
    virtual ~Objective() = default;
    virtual std::size_t size() const = 0;
    /// Adds the gradient of the mean batch loss into ctx.grad and returns the loss.
    virtual double batch(const BatchContext& ctx, std::span<const std::size_t> indices) = 0;
};

/// Extra loss term added per mini-batch with weight TrainConfig::consistency_weight.
class AuxLoss {
public:
    virtual ~AuxLoss() = default;
    virtual void begin_epoch(std::size_t epoch, std::size_t num_batches) = 0;
    /// Adds weight * gradient into ctx.grad; returns the unweighted loss.
    virtual double accumulate(const BatchContext& ctx, double weight) = 0;
};

/// Plain MSE over (x, y) examples.
class MseObjective final : public Objective {
public:
    explicit MseObjective(std::span<const Example> data);
    MseObjective(std::vector<double> X, std::vector<double> Y, std::size_t in_dim,
                 std::size_t out_dim);

    std::size_t size() const override { return count_; }
    double batch(const BatchContext& ctx, std::span<const std::size_t> indices) override;

private:
    std::vector<double> X_, Y_;
    std::size_t in_ = 0, out_ = 0, count_ = 0;
    std::vector<double> bx_, by_;
};

struct TrainResult {
    NetParams params;
    AdamState optimizer;
    std::vector<double> loss_history;  // per-epoch mean total loss
};

/// Seeded mini-batch training: per-epoch shuffle, last partial batch kept.
/// `init` defaults to init_params(arch, config.seed).
TrainResult train(const NetArchitecture& arch, Objective& objective, const TrainConfig& config,
                  AuxLoss* aux = nullptr, const NetParams* init = nullptr);

TrainResult train(const NetArchitecture& arch, std::span<const Example> dataset,
                  const TrainConfig& config, AuxLoss* aux = nullptr,
                  const NetParams* init = nullptr);

}  // namespace critsamp
