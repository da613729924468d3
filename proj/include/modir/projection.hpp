#pragma once

// Two-component PCA of pooled embeddings for visualization dumps.

#include <array>
#include <vector>

#include "modir/numerics.hpp"

namespace modir {

struct Projection {
    std::vector<std::array<double, 2>> coords;  // one per input point
    std::array<double, 2> variance{};           // of pc1, pc2
    Vec mean;
    std::array<Vec, 2> components;
};

// Components are ordered by descending variance; each is signed so that its
// largest-magnitude loading is positive. Requires at least 3 points.
Projection pca_2d(const std::vector<Vec>& points);

}  // namespace modir
