#pragma once

// Spatial dynamics network: from the nearest stored sample pairs around a query
// point, a network predicts the coefficients of one local polynomial per output
// component; evaluating those polynomials at the query gives the predicted state
// one lag later. Used to fabricate augmentation pairs.

#include <cstdint>
#include <span>
#include <vector>

#include "critsamp/dynsys.hpp"
#include "critsamp/tensornet.hpp"

namespace critsamp {

// -------------------------------------------------------------------------------------
// Polynomials

/// C(n + p, p): number of monomials of total degree <= p in n variables.
std::size_t monomial_count(std::size_t n, unsigned p);

/// Exponent vectors in graded-lexicographic order: by total degree, then
/// lexicographically descending in (a_1, ..., a_n). For n = 2, p = 2:
/// 1, u1, u2, u1^2, u1 u2, u2^2.
std::vector<std::vector<unsigned>> monomial_exponents(std::size_t n, unsigned p);

/// Values of all monomials at u, in monomial_exponents() order.
void monomial_values(std::span<const double> u, unsigned p, std::span<double> out);

/// sum_alpha c_alpha u^alpha.
double poly_eval(std::span<const double> coeffs, std::span<const double> u, unsigned p);

// -------------------------------------------------------------------------------------
// Exact nearest neighbours

/// Row-major copies of the oracle pairs of a sample set, in insertion order.
class NeighborIndex {
public:
    NeighborIndex() = default;
    explicit NeighborIndex(const SampleSet& samples);

    std::size_t size() const { return count_; }
    std::size_t dim() const { return dim_; }
    std::span<const double> u0(std::size_t i) const { return {u0_.data() + i * dim_, dim_}; }
    std::span<const double> u1(std::size_t i) const { return {u1_.data() + i * dim_, dim_}; }
    /// Position of oracle pair i inside the source SampleSet.
    std::size_t source_index(std::size_t i) const { return source_[i]; }

    /// Indices (into this index) of the H nearest points, ascending by distance, ties
    /// by index. `exclude` (an index of this index, or npos) is never returned.
    void query(std::span<const double> q, std::size_t H, std::vector<std::size_t>& idx,
               std::vector<double>& dist2, std::size_t exclude = npos) const;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    std::size_t dim_ = 0;
    std::size_t count_ = 0;
    std::vector<double> u0_, u1_;
    std::vector<std::size_t> source_;
    mutable std::vector<double> scratch_;
    mutable std::vector<std::size_t> order_;
};

struct Neighborhood {
    State query;
    std::vector<SamplePair> neighbors;  // ascending distance
    std::vector<std::size_t> indices;   // positions in the source SampleSet
    std::vector<double> distances;
};

/// Exact H nearest oracle pairs of `samples` around `query`.
Neighborhood knn(const SampleSet& samples, std::span<const double> query, std::size_t H);

// -------------------------------------------------------------------------------------
// Model

struct SpatialHyper {
    std::size_t h_nn = 10;
    unsigned order = 2;
    std::size_t blocks = 1;
    std::size_t layers_per_block = 3;
    std::size_t width = 40;

    /// H = 10 everywhere; p = 2 up to three dimensions, p = 1 above.
    static SpatialHyper defaults_for(std::size_t dim);
};

struct SpatialModel {
    std::size_t dim = 0;
    std::size_t h_nn = 10;
    unsigned order = 2;
    std::size_t coeff_count = 0;  // P per output component
    NetArchitecture arch;
    NetParams params;
    AdamState optimizer;
    /// Per-feature standardization applied to the encoding before the network.
    std::vector<double> feature_shift, feature_scale;
    /// Affine map of the state to the coordinates the polynomials are evaluated in.
    std::vector<double> coord_shift, coord_scale;
    /// Weight of the least-squares skip path: coefficients are
    /// skip_weight * local_fit + network output. 0 in a zero model, 1 once trained.
    double skip_weight = 0.0;

    std::size_t encoding_size() const { return dim + 2 * h_nn * dim; }
    bool operator==(const SpatialModel&) const = default;
};

/// A model with the right shapes and zero network parameters (all coefficients 0).
SpatialModel zero_spatial_model(std::size_t dim, const SpatialHyper& hyper,
                                const Hypercube& domain);

/// [query (n)] ++ per neighbour: [z(0) - query (n), z(Delta) - z(0) (n)].
std::vector<double> encode_neighborhood(std::span<const double> query, const NeighborIndex& index,
                                        std::span<const std::size_t> neighbors);

/// Minimum-norm least-squares coefficients (in the model's scaled coordinates) of
/// one degree-p polynomial per output component through the listed neighbours.
/// The fit is done in coordinates centred on the query and normalized by the
/// neighbourhood radius, then re-expanded.
std::vector<double> local_polynomial_fit(const SpatialModel& model, std::span<const double> query,
                                         const NeighborIndex& index,
                                         std::span<const std::size_t> neighbors);

/// Batched prediction against a fixed sample set.
class SpatialPredictor {
public:
    SpatialPredictor(const SpatialModel& model, const SampleSet& samples);

    const SpatialModel& model() const { return model_; }
    const NeighborIndex& index() const { return index_; }

    State predict(std::span<const double> query) const;
    /// Row-major queries (count x dim) to row-major predictions.
    std::vector<double> predict_batch(std::span<const double> queries, std::size_t count) const;

private:
    SpatialModel model_;
    NeighborIndex index_;
    Network net_;
};

State sdn_predict(const SpatialModel& model, const SampleSet& samples,
                  std::span<const double> query);

/// Leave-one-out training: each oracle pair is predicted from its H nearest *other*
/// oracle pairs. `domain` fixes the polynomial coordinate scaling.
SpatialModel train_sdn(const SampleSet& samples, const SpatialHyper& hyper,
                       const TrainConfig& config, const Hypercube& domain);

/// min(20 x oracle count, 20000).
std::size_t default_augment_count(std::size_t oracle_count);

/// S union V: the original pairs verbatim, then I pairs with uniform inputs on the
/// domain and SDN-predicted targets, provenance augmented. Point i is drawn from
/// the stream derived from (seed, i).
SampleSet augment(const SampleSet& samples, const SpatialModel& model, std::size_t I,
                  const Hypercube& domain, std::uint64_t seed);

}  // namespace critsamp
