// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "hierasparse/errors.hpp"

namespace hierasparse {

// Dense row-major matrix of float32 working values.  All engine math runs in
// float32; storage-format accounting treats elements as 16-bit (see
// compressed_cache.hpp), which is why this type stays deliberately plain.
struct Tensor2D {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;  // rows * cols, row-major

    Tensor2D() = default;
    Tensor2D(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

    float& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    const float& at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    float* row(std::size_t r) { return data.data() + r * cols; }
    const float* row(std::size_t r) const { return data.data() + r * cols; }

    bool same_shape(const Tensor2D& o) const { return rows == o.rows && cols == o.cols; }
};

// C = A * B  (naive triple loop; clarity over speed, this is a reference
// implementation and every optimized path is checked against it).
inline Tensor2D matmul(const Tensor2D& a, const Tensor2D& b) {
    detail::check_config(a.cols == b.rows, "matmul: inner dimensions differ");
    Tensor2D c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const float* arow = a.row(i);
        float* crow = c.row(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const float aik = arow[k];
            const float* brow = b.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
    return c;
}

inline Tensor2D transpose(const Tensor2D& a) {
    Tensor2D t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) {
            t.at(j, i) = a.at(i, j);
        }
    }
    return t;
}

// View-copy of rows [begin, end).
inline Tensor2D slice_rows(const Tensor2D& a, std::size_t begin, std::size_t end) {
    detail::check_config(begin <= end && end <= a.rows, "slice_rows: range out of bounds");
    Tensor2D s(end - begin, a.cols);
    std::copy(a.data.begin() + static_cast<std::ptrdiff_t>(begin * a.cols),
              a.data.begin() + static_cast<std::ptrdiff_t>(end * a.cols), s.data.begin());
    return s;
}

inline float max_abs_diff(const Tensor2D& a, const Tensor2D& b) {
    detail::check_config(a.same_shape(b), "max_abs_diff: shape mismatch");
    float m = 0.0f;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    }
    return m;
}

// ---------------------------------------------------------------------------
// Deterministic random fills.
//
// std::normal_distribution is implementation-defined, so identical seeds can
// give different streams across standard libraries.  Generation here goes
// through an explicit Box-Muller transform on top of mt19937_64 so the same
// seed reproduces the same tensor on every platform.
// ---------------------------------------------------------------------------

// Mixes a base seed with a stream label so distinct tensors (Q, K, V, ...)
// derived from one run seed get decorrelated generator states.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class GaussianSource {
public:
    explicit GaussianSource(std::uint64_t seed) : rng_(seed) {}

    float next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        // Box-Muller on uniforms in (0, 1]; u1 > 0 keeps the log finite.
        double u1 = 0.0;
        do {
            u1 = uniform01();
        } while (u1 <= 0.0);
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = static_cast<float>(r * std::sin(theta));
        have_spare_ = true;
        return static_cast<float>(r * std::cos(theta));
    }

private:
    double uniform01() {
        // 53-bit mantissa draw in [0, 1).
        return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    }

    std::mt19937_64 rng_;
    float spare_ = 0.0f;
    bool have_spare_ = false;
};

inline Tensor2D random_gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed,
                                float scale = 1.0f) {
    Tensor2D t(rows, cols);
    GaussianSource src(seed);
    for (float& v : t.data) v = src.next() * scale;
    return t;
}

} // namespace hierasparse
