#pragma once

#include <vector>

#include "gpode/numerics.hpp"

namespace gpode {

/// Time-stamped state samples: row i of `states` is the D-dimensional state
/// at `times[i]`. Times are strictly increasing.
struct Trajectory {
    Vector times;  // N
    Matrix states; // N x D

    Index size() const { return times.size(); }
    Index dim() const { return states.cols(); }

    void validate() const {
        if (times.size() != states.rows()) {
            throw DimensionMismatch("Trajectory: times and states disagree in length");
        }
        for (Index i = 1; i < times.size(); ++i) {
            if (!(times[i] > times[i - 1])) {
                throw Error("Trajectory: times must be strictly increasing");
            }
        }
    }
};

enum class PointProvenance { Trajectory, FixedPoint, Augmented };

/// Supervised (state, state-derivative) pairs for field learning.
struct DerivativeDataset {
    Matrix inputs;  // N x d_in
    Matrix targets; // N x D_out
    std::vector<PointProvenance> provenance; // one flag per point

    Index size() const { return inputs.rows(); }
    Index input_dim() const { return inputs.cols(); }
    Index output_dim() const { return targets.cols(); }

    void validate() const {
        if (inputs.rows() != targets.rows()) {
            throw DimensionMismatch("DerivativeDataset: inputs/targets length mismatch");
        }
        if (provenance.size() != static_cast<size_t>(inputs.rows())) {
            throw DimensionMismatch("DerivativeDataset: provenance length mismatch");
        }
        if (!inputs.allFinite() || !targets.allFinite()) {
            throw Error("DerivativeDataset: non-finite entries");
        }
    }
};

} // namespace gpode
