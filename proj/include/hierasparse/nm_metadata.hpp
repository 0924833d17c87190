// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "hierasparse/errors.hpp"
#include "hierasparse/tensor.hpp"

namespace hierasparse {

// N:M pattern: keep n_keep elements out of every m_group along the grouping
// axis.  The type carries general N:M for forward compatibility, but the
// metadata codec below only accepts 2:4 — the pattern every storage formula
// and the 2-bit position encoding assume.
struct NmPattern {
    std::uint16_t n_keep = 2;
    std::uint16_t m_group = 4;

    void validate() const {
        detail::check_config(n_keep >= 1 && m_group > n_keep,
                             "NmPattern: need 0 < n_keep < m_group");
    }

    bool is_two_four() const { return n_keep == 2 && m_group == 4; }

    bool operator==(const NmPattern&) const = default;
};

namespace detail {

inline void require_codec_pattern(const NmPattern& p) {
    p.validate();
    check_config(p.is_two_four(), "metadata codec: only the 2:4 pattern is supported");
}

} // namespace detail

// Kept-position indices of one group, ascending, each in [0, m_group).
using KeptPositions = std::vector<std::uint16_t>;

// Packed kept-position metadata: 2-bit codes, 8 codes per 16-bit word, zero
// padded.  Code c (kept positions in group order, low index first) occupies
// bits [2*(c mod 8), 2*(c mod 8) + 2) of word c / 8; for 2:4 one word covers
// 4 groups (16 source elements) and group g's nibble sits at bits
// [4g mod 16, 4g mod 16 + 4) with the first kept index in the low 2 bits.
struct GroupMetadata {
    NmPattern pattern;
    std::size_t group_count = 0;
    std::vector<std::uint16_t> words;

    static constexpr std::size_t kCodesPerWord = 8;

    std::size_t groups_per_word() const { return kCodesPerWord / pattern.n_keep; }
    std::size_t code_count() const { return group_count * pattern.n_keep; }

    std::uint16_t code(std::size_t c) const {
        return static_cast<std::uint16_t>(
            (words[c / kCodesPerWord] >> (2 * (c % kCodesPerWord))) & 0x3u);
    }
};

inline GroupMetadata pack_metadata(const std::vector<KeptPositions>& kept_positions,
                                   const NmPattern& pattern) {
    detail::require_codec_pattern(pattern);
    GroupMetadata meta;
    meta.pattern = pattern;
    meta.group_count = kept_positions.size();
    meta.words.assign((meta.code_count() + GroupMetadata::kCodesPerWord - 1) /
                          GroupMetadata::kCodesPerWord,
                      0);
    std::size_t c = 0;
    for (const KeptPositions& g : kept_positions) {
        detail::check_data(g.size() == pattern.n_keep,
                           "pack_metadata: group lists wrong kept count");
        for (std::size_t i = 0; i < g.size(); ++i) {
            detail::check_data(g[i] < pattern.m_group,
                               "pack_metadata: kept index out of range");
            detail::check_data(i == 0 || g[i] > g[i - 1],
                               "pack_metadata: kept indices not strictly increasing");
            meta.words[c / GroupMetadata::kCodesPerWord] = static_cast<std::uint16_t>(
                meta.words[c / GroupMetadata::kCodesPerWord] |
                static_cast<std::uint16_t>(g[i] << (2 * (c % GroupMetadata::kCodesPerWord))));
            ++c;
        }
    }
    return meta;
}

// Exact inverse of pack_metadata over the first group_count groups.  Rejects
// words whose codes do not decode to strictly increasing in-range positions.
inline std::vector<KeptPositions> unpack_metadata(const GroupMetadata& meta,
                                                  std::size_t group_count) {
    detail::require_codec_pattern(meta.pattern);
    detail::check_data(group_count <= meta.group_count,
                       "unpack_metadata: fewer groups than requested");
    detail::check_data(meta.words.size() * GroupMetadata::kCodesPerWord >= meta.code_count(),
                       "unpack_metadata: word array shorter than code count");
    std::vector<KeptPositions> kept(group_count);
    std::size_t c = 0;
    for (KeptPositions& g : kept) {
        g.resize(meta.pattern.n_keep);
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] = meta.code(c++);
            detail::check_data(g[i] < meta.pattern.m_group,
                               "unpack_metadata: code out of range");
            detail::check_data(i == 0 || g[i] > g[i - 1],
                               "unpack_metadata: corrupt metadata, codes not increasing");
        }
    }
    return kept;
}

// Materializes the dense-equivalent matrix of a compressed operand: nnz holds
// the kept values (groups along columns, row-major traversal), the result is
// rows × full_cols with each value scattered to its coded position and zeros
// elsewhere.  This is the value-semantics contract of sparse tensor input:
// nonzeros plus metadata determine a unique dense matrix.
inline Tensor2D expand_sparse(const Tensor2D& nnz, const GroupMetadata& meta,
                              const NmPattern& pattern, std::size_t full_cols) {
    detail::require_codec_pattern(pattern);
    detail::check_config(pattern == meta.pattern, "expand_sparse: pattern mismatch");
    detail::check_config(full_cols % pattern.m_group == 0,
                         "expand_sparse: full_cols not divisible by m_group");
    const std::size_t groups_per_row = full_cols / pattern.m_group;
    detail::check_config(nnz.cols == groups_per_row * pattern.n_keep,
                         "expand_sparse: nnz column count mismatch");
    detail::check_data(meta.group_count == nnz.rows * groups_per_row,
                       "expand_sparse: metadata does not cover all groups");

    const std::vector<KeptPositions> kept = unpack_metadata(meta, meta.group_count);
    Tensor2D dense(nnz.rows, full_cols);
    for (std::size_t r = 0; r < nnz.rows; ++r) {
        for (std::size_t g = 0; g < groups_per_row; ++g) {
            const KeptPositions& pos = kept[r * groups_per_row + g];
            for (std::size_t i = 0; i < pos.size(); ++i) {
                dense.at(r, g * pattern.m_group + pos[i]) =
                    nnz.at(r, g * pattern.n_keep + i);
            }
        }
    }
    return dense;
}

} // namespace hierasparse
