#include "critsamp/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "critsamp/kernels.hpp"
#include "critsamp/rng.hpp"

namespace critsamp {

std::size_t monomial_count(std::size_t n, unsigned p) {
    // C(n + p, p) computed incrementally; exact for the sizes used here.
    std::size_t c = 1;
    for (unsigned k = 1; k <= p; ++k) c = c * (n + k) / k;
    return c;
}

namespace {

void exponents_of_degree(std::size_t n, unsigned d, std::size_t pos, std::vector<unsigned>& cur,
                         std::vector<std::vector<unsigned>>& out) {
    if (pos + 1 == n) {
        cur[pos] = d;
        out.push_back(cur);
        return;
    }
    for (unsigned a = d + 1; a-- > 0;) {
        cur[pos] = a;
        exponents_of_degree(n, d - a, pos + 1, cur, out);
    }
}

}  // namespace

std::vector<std::vector<unsigned>> monomial_exponents(std::size_t n, unsigned p) {
    if (n == 0) throw InvalidArgument("polynomials need at least one variable");
    std::vector<std::vector<unsigned>> out;
    std::vector<unsigned> cur(n, 0);
    for (unsigned d = 0; d <= p; ++d) exponents_of_degree(n, d, 0, cur, out);
    return out;
}

void monomial_values(std::span<const double> u, unsigned p, std::span<double> out) {
    const std::size_t n = u.size();
    if (out.size() != monomial_count(n, p)) throw InvalidArgument("monomial buffer has the wrong size");
    out[0] = 1.0;
    if (p == 0) return;
    for (std::size_t i = 0; i < n; ++i) out[1 + i] = u[i];
    if (p == 1) return;
    if (p == 2) {
        std::size_t k = 1 + n;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i; j < n; ++j) out[k++] = u[i] * u[j];
        return;
    }
    const auto exps = monomial_exponents(n, p);
    for (std::size_t m = 1 + n; m < exps.size(); ++m) {
        double v = 1.0;
        for (std::size_t i = 0; i < n; ++i)
            for (unsigned a = 0; a < exps[m][i]; ++a) v *= u[i];
        out[m] = v;
    }
}

double poly_eval(std::span<const double> coeffs, std::span<const double> u, unsigned p) {
    const std::size_t P = monomial_count(u.size(), p);
    if (coeffs.size() != P) throw InvalidArgument("coefficient count does not match C(n+p, p)");
    std::vector<double> m(P);
    monomial_values(u, p, m);
    double s = 0.0;
    for (std::size_t i = 0; i < P; ++i) s += coeffs[i] * m[i];
    return s;
}

// -------------------------------------------------------------------------------------

NeighborIndex::NeighborIndex(const SampleSet& samples) {
    dim_ = samples.dim();
    for (std::size_t i = 0; i < samples.pairs.size(); ++i) {
        const auto& p = samples.pairs[i];
        if (!p.is_oracle()) continue;
        u0_.insert(u0_.end(), p.u0.begin(), p.u0.end());
        u1_.insert(u1_.end(), p.u1.begin(), p.u1.end());
        source_.push_back(i);
    }
    count_ = source_.size();
}

void NeighborIndex::query(std::span<const double> q, std::size_t H, std::vector<std::size_t>& idx,
                          std::vector<double>& dist2, std::size_t exclude) const {
    if (q.size() != dim_) throw InvalidArgument("query has the wrong dimension");
    const std::size_t available = count_ - (exclude < count_ ? 1 : 0);
    if (H > available) throw InvalidArgument("not enough oracle samples for the neighbourhood size");
    scratch_.resize(count_);
    kernels::active().sqdist(u0_.data(), q.data(), scratch_.data(), count_, dim_);
    order_.resize(count_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (exclude < count_) {
        std::swap(order_[exclude], order_.back());
        order_.pop_back();
    }
    const auto less = [this](std::size_t a, std::size_t b) {
        return scratch_[a] < scratch_[b] || (scratch_[a] == scratch_[b] && a < b);
    };
    std::partial_sort(order_.begin(), order_.begin() + static_cast<std::ptrdiff_t>(H), order_.end(), less);
    idx.assign(order_.begin(), order_.begin() + static_cast<std::ptrdiff_t>(H));
    dist2.resize(H);
    for (std::size_t h = 0; h < H; ++h) dist2[h] = scratch_[idx[h]];
}

Neighborhood knn(const SampleSet& samples, std::span<const double> query, std::size_t H) {
    const NeighborIndex index(samples);
    std::vector<std::size_t> idx;
    std::vector<double> d2;
    index.query(query, H, idx, d2);
    Neighborhood nb;
    nb.query.assign(query.begin(), query.end());
    for (std::size_t h = 0; h < H; ++h) {
        const std::size_t src = index.source_index(idx[h]);
        nb.neighbors.push_back(samples.pairs[src]);
        nb.indices.push_back(src);
        nb.distances.push_back(std::sqrt(d2[h]));
    }
    return nb;
}

// -------------------------------------------------------------------------------------

SpatialHyper SpatialHyper::defaults_for(std::size_t dim) {
    SpatialHyper h;
    h.order = dim <= 3 ? 2 : 1;
    return h;
}

SpatialModel zero_spatial_model(std::size_t dim, const SpatialHyper& hyper,
                                const Hypercube& domain) {
    if (dim == 0 || domain.dim() != dim) throw InvalidArgument("spatial model dimension mismatch");
    if (hyper.h_nn < 1) throw InvalidArgument("neighbourhood size must be >= 1");
    SpatialModel m;
    m.dim = dim;
    m.h_nn = hyper.h_nn;
    m.order = hyper.order;
    m.coeff_count = monomial_count(dim, hyper.order);
    m.arch.input_dim = m.encoding_size();
    m.arch.output_dim = dim * m.coeff_count;
    m.arch.blocks = hyper.blocks;
    m.arch.layers_per_block = hyper.layers_per_block;
    m.arch.width = hyper.width;
    m.params = zero_params(m.arch);
    m.feature_shift.assign(m.encoding_size(), 0.0);
    m.feature_scale.assign(m.encoding_size(), 1.0);
    m.coord_shift = domain.center();
    m.coord_scale.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) m.coord_scale[i] = 0.5 * (domain.upper[i] - domain.lower[i]);
    return m;
}

std::vector<double> encode_neighborhood(std::span<const double> query, const NeighborIndex& index,
                                        std::span<const std::size_t> neighbors) {
    const std::size_t n = index.dim();
    std::vector<double> e;
    e.reserve(n + 2 * n * neighbors.size());
    e.insert(e.end(), query.begin(), query.end());
    for (const std::size_t j : neighbors) {
        const auto z0 = index.u0(j);
        const auto z1 = index.u1(j);
        for (std::size_t i = 0; i < n; ++i) e.push_back(z0[i] - query[i]);
        for (std::size_t i = 0; i < n; ++i) e.push_back(z1[i] - z0[i]);
    }
    return e;
}

namespace {

std::vector<double> scaled_coords(std::span<const double> q, const SpatialModel& m) {
    std::vector<double> s(m.dim);
    for (std::size_t i = 0; i < m.dim; ++i) s[i] = (q[i] - m.coord_shift[i]) / m.coord_scale[i];
    return s;
}

double binomial(unsigned n, unsigned k) {
    double c = 1.0;
    for (unsigned i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
    return c;
}

}  // namespace

std::vector<double> local_polynomial_fit(const SpatialModel& m, std::span<const double> query,
                                         const NeighborIndex& index,
                                         std::span<const std::size_t> neighbors) {
    const std::size_t n = m.dim;
    const std::size_t P = m.coeff_count;
    const std::size_t H = neighbors.size();
    if (query.size() != n || index.dim() != n) throw InvalidArgument("local fit dimension mismatch");
    const auto sq = scaled_coords(query, m);

    // t = (s - s_q) / r keeps the design matrix well conditioned for tight neighbourhoods.
    std::vector<std::vector<double>> t(H);
    double r = 0.0;
    for (std::size_t h = 0; h < H; ++h) {
        t[h] = scaled_coords(index.u0(neighbors[h]), m);
        double d2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            t[h][i] -= sq[i];
            d2 += t[h][i] * t[h][i];
        }
        r = std::max(r, std::sqrt(d2));
    }
    if (!(r > 0.0)) r = 1.0;

    Eigen::MatrixXd A(H, P);
    Eigen::MatrixXd Y(H, n);
    std::vector<double> mono(P);
    for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t i = 0; i < n; ++i) t[h][i] /= r;
        monomial_values(t[h], m.order, mono);
        for (std::size_t a = 0; a < P; ++a) A(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(a)) = mono[a];
        const auto u1 = index.u1(neighbors[h]);
        for (std::size_t c = 0; c < n; ++c) Y(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(c)) = u1[c];
    }
    const Eigen::MatrixXd B = A.completeOrthogonalDecomposition().solve(Y);

    // Re-expand b_beta * prod_i ((s_i - sq_i) / r)^beta_i in powers of s.
    const auto exps = monomial_exponents(n, m.order);
    std::vector<double> coeffs(n * P, 0.0);
    for (std::size_t b = 0; b < P; ++b) {
        unsigned deg = 0;
        for (const unsigned e : exps[b]) deg += e;
        const double rscale = std::pow(r, -static_cast<double>(deg));
        for (std::size_t a = 0; a < P; ++a) {
            double w = rscale;
            for (std::size_t i = 0; i < n && w != 0.0; ++i) {
                const unsigned bi = exps[b][i];
                const unsigned ai = exps[a][i];
                if (ai > bi) {
                    w = 0.0;
                    break;
                }
                w *= binomial(bi, ai) * std::pow(-sq[i], static_cast<double>(bi - ai));
            }
            if (w == 0.0) continue;
            for (std::size_t c = 0; c < n; ++c) {
                coeffs[c * P + a] += w * B(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(c));
            }
        }
    }
    return coeffs;
}

namespace {

void standardize(std::span<double> features, const SpatialModel& m) {
    for (std::size_t i = 0; i < features.size(); ++i) {
        features[i] = (features[i] - m.feature_shift[i]) / m.feature_scale[i];
    }
}

void scaled_monomials(std::span<const double> q, const SpatialModel& m, std::span<double> out) {
    monomial_values(scaled_coords(q, m), m.order, out);
}

/// pred[j] = sum_a coeffs[j * P + a] * mono[a].
void contract(std::span<const double> coeffs, std::span<const double> mono, std::size_t n,
              std::span<double> pred) {
    const std::size_t P = mono.size();
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t a = 0; a < P; ++a) s += coeffs[j * P + a] * mono[a];
        pred[j] = s;
    }
}

class SdnObjective final : public Objective {
public:
    /// S holds the skip-path coefficients (already weighted) per example.
    SdnObjective(std::vector<double> X, std::vector<double> M, std::vector<double> S,
                 std::vector<double> Y, const SpatialModel& m)
        : X_(std::move(X)), M_(std::move(M)), S_(std::move(S)), Y_(std::move(Y)),
          in_(m.encoding_size()), n_(m.dim), P_(m.coeff_count) {
        count_ = Y_.size() / n_;
    }

    std::size_t size() const override { return count_; }

    double batch(const BatchContext& ctx, std::span<const std::size_t> indices) override {
        const std::size_t B = indices.size();
        bx_.resize(B * in_);
        for (std::size_t r = 0; r < B; ++r) {
            std::copy_n(X_.begin() + indices[r] * in_, in_, bx_.begin() + r * in_);
        }
        ctx.net.forward(ctx.params, bx_, B, ctx.ws);
        const auto out = ctx.ws.output();
        dout_.assign(B * n_ * P_, 0.0);
        std::vector<double> pred(n_), skip(n_);
        const double inv = 1.0 / static_cast<double>(B);
        double loss = 0.0;
        for (std::size_t r = 0; r < B; ++r) {
            const std::size_t j = indices[r];
            const std::span<const double> mono(M_.data() + j * P_, P_);
            contract(out.subspan(r * n_ * P_, n_ * P_), mono, n_, pred);
            contract(std::span<const double>(S_).subspan(j * n_ * P_, n_ * P_), mono, n_, skip);
            for (std::size_t c = 0; c < n_; ++c) {
                const double res = pred[c] + skip[c] - Y_[j * n_ + c];
                loss += res * res;
                const double g = 2.0 * res * inv;
                for (std::size_t a = 0; a < P_; ++a) dout_[r * n_ * P_ + c * P_ + a] = g * mono[a];
            }
        }
        ctx.net.backward(ctx.params, dout_, ctx.ws, ctx.grad);
        return loss * inv;
    }

private:
    std::vector<double> X_, M_, S_, Y_;
    std::size_t in_, n_, P_, count_ = 0;
    std::vector<double> bx_, dout_;
};

}  // namespace

SpatialPredictor::SpatialPredictor(const SpatialModel& model, const SampleSet& samples)
    : model_(model), index_(samples), net_(model.arch) {
    if (samples.dim() != model.dim) throw InvalidArgument("sample set dimension does not match model");
}

State SpatialPredictor::predict(std::span<const double> query) const {
    auto out = predict_batch(query, 1);
    return State(out.begin(), out.end());
}

std::vector<double> SpatialPredictor::predict_batch(std::span<const double> queries,
                                                    std::size_t count) const {
    const std::size_t n = model_.dim;
    const std::size_t P = model_.coeff_count;
    const std::size_t E = model_.encoding_size();
    if (queries.size() != count * n) throw InvalidArgument("query batch has the wrong shape");
    std::vector<double> result(count * n);
    constexpr std::size_t chunk = 256;
    std::vector<double> X, S, mono(P);
    std::vector<std::size_t> idx;
    std::vector<double> d2;
    Workspace ws;
    for (std::size_t lo = 0; lo < count; lo += chunk) {
        const std::size_t B = std::min(chunk, count - lo);
        X.resize(B * E);
        S.assign(B * n * P, 0.0);
        for (std::size_t r = 0; r < B; ++r) {
            const auto q = queries.subspan((lo + r) * n, n);
            index_.query(q, model_.h_nn, idx, d2);
            if (model_.skip_weight != 0.0) {
                const auto c = local_polynomial_fit(model_, q, index_, idx);
                for (std::size_t k = 0; k < c.size(); ++k) S[r * n * P + k] = model_.skip_weight * c[k];
            }
            auto e = encode_neighborhood(q, index_, idx);
            standardize(e, model_);
            std::copy(e.begin(), e.end(), X.begin() + r * E);
        }
        net_.forward(model_.params.values, X, B, ws);
        const auto out = ws.output();
        for (std::size_t r = 0; r < B; ++r) {
            const auto q = queries.subspan((lo + r) * n, n);
            scaled_monomials(q, model_, mono);
            std::vector<double> coeffs(out.begin() + r * n * P, out.begin() + (r + 1) * n * P);
            for (std::size_t k = 0; k < coeffs.size(); ++k) coeffs[k] += S[r * n * P + k];
            contract(coeffs, mono, n, std::span<double>(result).subspan((lo + r) * n, n));
        }
    }
    return result;
}

State sdn_predict(const SpatialModel& model, const SampleSet& samples,
                  std::span<const double> query) {
    return SpatialPredictor(model, samples).predict(query);
}

SpatialModel train_sdn(const SampleSet& samples, const SpatialHyper& hyper,
                       const TrainConfig& config, const Hypercube& domain) {
    const std::size_t n = samples.dim();
    SpatialModel m = zero_spatial_model(n, hyper, domain);
    const NeighborIndex index(samples);
    const std::size_t N = index.size();
    if (N < hyper.h_nn + 1) throw InvalidArgument("spatial training needs at least h_nn + 1 oracle pairs");
    const std::size_t E = m.encoding_size();
    const std::size_t P = m.coeff_count;

    m.skip_weight = 1.0;
    std::vector<double> X(N * E), M(N * P), S(N * n * P), Y(N * n);
    std::vector<std::size_t> idx;
    std::vector<double> d2;
    for (std::size_t i = 0; i < N; ++i) {
        index.query(index.u0(i), hyper.h_nn, idx, d2, i);
        const auto e = encode_neighborhood(index.u0(i), index, idx);
        std::copy(e.begin(), e.end(), X.begin() + i * E);
        const auto c = local_polynomial_fit(m, index.u0(i), index, idx);
        std::copy(c.begin(), c.end(), S.begin() + i * n * P);
        scaled_monomials(index.u0(i), m, std::span<double>(M).subspan(i * P, P));
        const auto u1 = index.u1(i);
        std::copy(u1.begin(), u1.end(), Y.begin() + i * n);
    }

    for (std::size_t f = 0; f < E; ++f) {
        double mean = 0.0;
        for (std::size_t i = 0; i < N; ++i) mean += X[i * E + f];
        mean /= static_cast<double>(N);
        double var = 0.0;
        for (std::size_t i = 0; i < N; ++i) var += (X[i * E + f] - mean) * (X[i * E + f] - mean);
        const double sd = std::sqrt(var / static_cast<double>(N));
        m.feature_shift[f] = mean;
        m.feature_scale[f] = sd > 1e-12 ? sd : 1.0;
    }
    for (std::size_t i = 0; i < N; ++i) standardize(std::span<double>(X).subspan(i * E, E), m);

    SdnObjective objective(std::move(X), std::move(M), std::move(S), std::move(Y), m);
    // The network starts as a zero correction to the local fit.
    NetParams init = init_params(m.arch, config.seed);
    const ParamLayout layout(m.arch);
    const LayerSlot& last = layout.layers().back();
    std::fill_n(init.values.begin() + static_cast<std::ptrdiff_t>(last.weight), last.in * last.out, 0.0);
    std::fill_n(init.values.begin() + static_cast<std::ptrdiff_t>(last.bias), last.out, 0.0);
    auto result = train(m.arch, objective, config, nullptr, &init);
    m.params = std::move(result.params);
    m.optimizer = std::move(result.optimizer);
    return m;
}

std::size_t default_augment_count(std::size_t oracle_count) {
    return std::min<std::size_t>(20 * oracle_count, 20000);
}

SampleSet augment(const SampleSet& samples, const SpatialModel& model, std::size_t I,
                  const Hypercube& domain, std::uint64_t seed) {
    SampleSet out = samples;
    if (I == 0) return out;
    const std::size_t n = model.dim;
    if (domain.dim() != n) throw InvalidArgument("domain dimension does not match model");
    std::vector<double> Q(I * n);
    for (std::size_t i = 0; i < I; ++i) {
        Rng rng(derive_seed(seed, streams::augment, i));
        const State q = domain.sample(rng);
        std::copy(q.begin(), q.end(), Q.begin() + i * n);
    }
    const SpatialPredictor predictor(model, samples);
    const auto pred = predictor.predict_batch(Q, I);
    out.pairs.reserve(samples.size() + I);
    for (std::size_t i = 0; i < I; ++i) {
        SamplePair p;
        p.u0.assign(Q.begin() + i * n, Q.begin() + (i + 1) * n);
        p.u1.assign(pred.begin() + i * n, pred.begin() + (i + 1) * n);
        p.provenance = Provenance::augmented;
        out.pairs.push_back(std::move(p));
    }
    return out;
}

}  // namespace critsamp
