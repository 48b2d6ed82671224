#include "critsamp/tensornet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "critsamp/kernels.hpp"
#include "critsamp/rng.hpp"

namespace critsamp {

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::tanh: return "tanh";
    }
    return "?";
}

Activation activation_from_string(std::string_view s) {
    if (s == "tanh") return Activation::tanh;
    throw InvalidArgument("unknown activation '" + std::string(s) + "'");
}

void NetArchitecture::validate() const {
    if (input_dim < 1 || output_dim < 1) throw InvalidArgument("network dims must be >= 1");
    if (blocks < 1) throw InvalidArgument("network needs at least one residual block");
    if (layers_per_block < 1) throw InvalidArgument("blocks need at least one hidden layer");
    if (width < 1) throw InvalidArgument("hidden width must be >= 1");
}

ParamLayout::ParamLayout(const NetArchitecture& arch) : arch_(arch) {
    arch_.validate();
    auto add = [this](std::size_t in, std::size_t out) {
        LayerSlot s{in, out, total_, total_ + in * out};
        total_ += in * out + out;
        layers_.push_back(s);
    };
    for (std::size_t b = 0; b < arch_.blocks; ++b) {
        add(arch_.input_dim, arch_.width);
        for (std::size_t l = 1; l < arch_.layers_per_block; ++l) add(arch_.width, arch_.width);
        add(arch_.width, arch_.input_dim);
    }
    if (arch_.has_head()) add(arch_.input_dim, arch_.output_dim);
}

std::span<const LayerSlot> ParamLayout::block(std::size_t b) const {
    const std::size_t per = arch_.layers_per_block + 1;
    return std::span<const LayerSlot>(layers_).subspan(b * per, per);
}

NetParams init_params(const NetArchitecture& arch, std::uint64_t seed) {
    const ParamLayout layout(arch);
    NetParams p;
    p.values.assign(layout.size(), 0.0);
    Rng rng(seed);
    for (const auto& s : layout.layers()) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(s.in));
        for (std::size_t k = 0; k < s.in * s.out; ++k) p.values[s.weight + k] = rng.uniform(-bound, bound);
    }
    return p;
}

NetParams zero_params(const NetArchitecture& arch) {
    return NetParams{std::vector<double>(ParamLayout(arch).size(), 0.0)};
}

void Workspace::prepare(const ParamLayout& layout, std::size_t batch) {
    const auto& a = layout.arch();
    arch_ = a;
    batch_ = batch;
    out_dim_ = a.output_dim;
    block_in_.resize(a.blocks + 1);
    for (auto& v : block_in_) v.resize(batch * a.input_dim);
    hidden_.resize(a.blocks * a.layers_per_block);
    for (auto& v : hidden_) v.resize(batch * a.width);
    out_.resize(batch * a.output_dim);
    g_state_.resize(batch * a.input_dim);
    g_tmp_.resize(batch * a.input_dim);
    g_hidden_a_.resize(batch * a.width);
    g_hidden_b_.resize(batch * a.width);
    d_out_.resize(batch * a.output_dim);
}

void Network::forward(std::span<const double> params, std::span<const double> X,
                      std::size_t batch, Workspace& ws) const {
    const auto& a = arch();
    if (params.size() != layout_.size()) throw InvalidArgument("parameter count does not match architecture");
    if (X.size() != batch * a.input_dim) throw InvalidArgument("input batch has the wrong shape");
    if (ws.batch_ != batch || !(ws.arch_ == a)) ws.prepare(layout_, batch);
    const auto& k = kernels::active();
    const double* P = params.data();
    std::copy(X.begin(), X.end(), ws.block_in_[0].begin());
    const std::size_t L = a.layers_per_block;
    for (std::size_t b = 0; b < a.blocks; ++b) {
        const auto slots = layout_.block(b);
        const double* prev = ws.block_in_[b].data();
        for (std::size_t l = 0; l < L; ++l) {
            double* h = ws.hidden_[b * L + l].data();
            const auto& s = slots[l];
            k.affine(P + s.weight, P + s.bias, prev, h, batch, s.in, s.out);
            k.tanh_inplace(h, batch * s.out);
            prev = h;
        }
        const auto& so = slots[L];
        double* next = ws.block_in_[b + 1].data();
        k.affine(P + so.weight, P + so.bias, prev, next, batch, so.in, so.out);
        const double* cur = ws.block_in_[b].data();
        for (std::size_t i = 0; i < batch * a.input_dim; ++i) next[i] += cur[i];
    }
    const double* final_state = ws.block_in_[a.blocks].data();
    if (const LayerSlot* h = layout_.head()) {
        k.affine(P + h->weight, P + h->bias, final_state, ws.out_.data(), batch, h->in, h->out);
    } else {
        std::copy(final_state, final_state + batch * a.input_dim, ws.out_.begin());
    }
}

void Network::backward(std::span<const double> params, std::span<const double> d_out,
                       Workspace& ws, std::span<double> grad) const {
    const auto& a = arch();
    const auto& k = kernels::active();
    const double* P = params.data();
    double* G = grad.data();
    const std::size_t batch = ws.batch_;
    const std::size_t n_state = batch * a.input_dim;

    if (const LayerSlot* h = layout_.head()) {
        k.affine_grad_params(ws.block_in_[a.blocks].data(), d_out.data(), G + h->weight,
                             G + h->bias, batch, h->in, h->out);
        k.affine_grad_input(P + h->weight, d_out.data(), ws.g_state_.data(), batch, h->in, h->out);
    } else {
        std::copy(d_out.begin(), d_out.end(), ws.g_state_.begin());
    }

    const std::size_t L = a.layers_per_block;
    for (std::size_t bb = a.blocks; bb-- > 0;) {
        const auto slots = layout_.block(bb);
        const auto& so = slots[L];
        const double* h_last = ws.hidden_[bb * L + L - 1].data();
        k.affine_grad_params(h_last, ws.g_state_.data(), G + so.weight, G + so.bias, batch, so.in,
                             so.out);
        k.affine_grad_input(P + so.weight, ws.g_state_.data(), ws.g_hidden_a_.data(), batch, so.in,
                            so.out);
        for (std::size_t l = L; l-- > 0;) {
            const auto& s = slots[l];
            const double* h = ws.hidden_[bb * L + l].data();
            double* dz = ws.g_hidden_a_.data();
            for (std::size_t i = 0; i < batch * s.out; ++i) dz[i] *= 1.0 - h[i] * h[i];
            const double* prev = (l == 0) ? ws.block_in_[bb].data() : ws.hidden_[bb * L + l - 1].data();
            k.affine_grad_params(prev, dz, G + s.weight, G + s.bias, batch, s.in, s.out);
            if (l > 0) {
                k.affine_grad_input(P + s.weight, dz, ws.g_hidden_b_.data(), batch, s.in, s.out);
                std::swap(ws.g_hidden_a_, ws.g_hidden_b_);
            } else {
                k.affine_grad_input(P + s.weight, dz, ws.g_tmp_.data(), batch, s.in, s.out);
                for (std::size_t i = 0; i < n_state; ++i) ws.g_state_[i] += ws.g_tmp_[i];
            }
        }
    }
}

State Network::evaluate(std::span<const double> params, std::span<const double> x) const {
    if (x.size() != arch().input_dim) throw InvalidArgument("input has the wrong dimension");
    Workspace ws;
    forward(params, x, 1, ws);
    return State(ws.output().begin(), ws.output().end());
}

double Network::mse_accumulate(std::span<const double> params, std::span<const double> X,
                               std::span<const double> Y, std::size_t batch, double scale,
                               std::span<double> grad, Workspace& ws) const {
    forward(params, X, batch, ws);
    const std::size_t m = batch * arch().output_dim;
    const double inv = 1.0 / static_cast<double>(batch);
    double loss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double r = ws.out_[i] - Y[i];
        loss += r * r;
        ws.d_out_[i] = 2.0 * r * inv * scale;
    }
    backward(params, {ws.d_out_.data(), m}, ws, grad);
    return loss * inv;
}

State net_forward(const NetArchitecture& arch, const NetParams& params,
                  std::span<const double> x) {
    return Network(arch).evaluate(params.values, x);
}

std::vector<double> net_gradient(const NetArchitecture& arch, const NetParams& params,
                                 std::span<const Example> batch) {
    if (batch.empty()) throw InvalidArgument("gradient needs a non-empty batch");
    const Network net(arch);
    std::vector<double> X, Y;
    for (const auto& e : batch) {
        if (e.x.size() != arch.input_dim || e.y.size() != arch.output_dim) {
            throw InvalidArgument("example has the wrong shape");
        }
        X.insert(X.end(), e.x.begin(), e.x.end());
        Y.insert(Y.end(), e.y.begin(), e.y.end());
    }
    std::vector<double> grad(net.layout().size(), 0.0);
    Workspace ws;
    net.mse_accumulate(params.values, X, Y, batch.size(), 1.0, grad, ws);
    return grad;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& cfg, double lr) {
    if (grads.size() != params.size()) throw InvalidArgument("gradient/parameter size mismatch");
    if (state.m.size() != params.size()) state.reset(params.size());
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

void TrainConfig::validate() const {
    if (epochs < 1) throw InvalidArgument("training needs at least one epoch");
    if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
    if (!(lr_final > 0.0) || !(lr_final <= lr_initial)) {
        throw InvalidArgument("learning rates must satisfy 0 < lr_final <= lr_initial");
    }
    if (consistency_weight < 0.0) throw InvalidArgument("consistency weight must be >= 0");
}

double TrainConfig::learning_rate(std::size_t epoch) const {
    if (epochs <= 1) return lr_initial;
    const double ratio = std::pow(lr_final / lr_initial, 1.0 / static_cast<double>(epochs - 1));
    return lr_initial * std::pow(ratio, static_cast<double>(epoch));
}

MseObjective::MseObjective(std::span<const Example> data) {
    if (data.empty()) throw InvalidArgument("training set is empty");
    in_ = data.front().x.size();
    out_ = data.front().y.size();
    count_ = data.size();
    X_.reserve(count_ * in_);
    Y_.reserve(count_ * out_);
    for (const auto& e : data) {
        if (e.x.size() != in_ || e.y.size() != out_) throw InvalidArgument("ragged training set");
        X_.insert(X_.end(), e.x.begin(), e.x.end());
        Y_.insert(Y_.end(), e.y.begin(), e.y.end());
    }
}

MseObjective::MseObjective(std::vector<double> X, std::vector<double> Y, std::size_t in_dim,
                           std::size_t out_dim)
    : X_(std::move(X)), Y_(std::move(Y)), in_(in_dim), out_(out_dim) {
    if (in_ == 0 || out_ == 0 || X_.size() % in_ != 0) throw InvalidArgument("bad training matrix");
    count_ = X_.size() / in_;
    if (count_ == 0) throw InvalidArgument("training set is empty");
    if (Y_.size() != count_ * out_) throw InvalidArgument("inputs and targets disagree in count");
}

double MseObjective::batch(const BatchContext& ctx, std::span<const std::size_t> indices) {
    const std::size_t B = indices.size();
    bx_.resize(B * in_);
    by_.resize(B * out_);
    for (std::size_t r = 0; r < B; ++r) {
        const std::size_t j = indices[r];
        std::copy_n(X_.begin() + j * in_, in_, bx_.begin() + r * in_);
        std::copy_n(Y_.begin() + j * out_, out_, by_.begin() + r * out_);
    }
    return ctx.net.mse_accumulate(ctx.params, bx_, by_, B, 1.0, ctx.grad, ctx.ws);
}

TrainResult train(const NetArchitecture& arch, Objective& objective, const TrainConfig& config,
                  AuxLoss* aux, const NetParams* init) {
    config.validate();
    const std::size_t N = objective.size();
    if (N == 0) throw InvalidArgument("training set is empty");
    const Network net(arch);
    TrainResult result;
    result.params = init ? *init : init_params(arch, config.seed);
    if (result.params.values.size() != net.layout().size()) {
        throw InvalidArgument("initial parameters do not match architecture");
    }
    result.optimizer.reset(net.layout().size());
    const bool use_aux = aux != nullptr && config.consistency_weight > 0.0;

    Rng rng(derive_seed(config.seed, streams::shuffle));
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> grad(net.layout().size());
    Workspace ws, aux_ws;
    const std::size_t B = config.batch_size;
    const std::size_t num_batches = (N + B - 1) / B;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = config.learning_rate(epoch);
        rng.shuffle(order);
        if (use_aux) aux->begin_epoch(epoch, num_batches);
        double epoch_loss = 0.0;
        for (std::size_t bi = 0; bi < num_batches; ++bi) {
            const std::size_t lo = bi * B;
            const std::size_t count = std::min(B, N - lo);
            std::fill(grad.begin(), grad.end(), 0.0);
            BatchContext ctx{net, result.params.values, grad, ws, epoch, bi, num_batches};
            double loss = objective.batch(ctx, std::span<const std::size_t>(order).subspan(lo, count));
            if (use_aux) {
                BatchContext actx{net, result.params.values, grad, aux_ws, epoch, bi, num_batches};
                loss += config.consistency_weight * aux->accumulate(actx, config.consistency_weight);
            }
            if (!std::isfinite(loss)) {
                throw TrainingDiverged("training loss became non-finite at epoch " + std::to_string(epoch), epoch);
            }
            adam_step(result.params.values, grad, result.optimizer, config.adam, lr);
            epoch_loss += loss * static_cast<double>(count);
        }
        if (!all_finite(result.params.values)) {
            throw TrainingDiverged("parameters became non-finite at epoch " + std::to_string(epoch), epoch);
        }
        result.loss_history.push_back(epoch_loss / static_cast<double>(N));
    }
    return result;
}

TrainResult train(const NetArchitecture& arch, std::span<const Example> dataset,
                  const TrainConfig& config, AuxLoss* aux, const NetParams* init) {
    if (dataset.empty()) throw InvalidArgument("training set is empty");
    MseObjective objective(dataset);
    return train(arch, objective, config, aux, init);
}

}  // namespace critsamp
