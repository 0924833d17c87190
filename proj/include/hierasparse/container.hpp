// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "hierasparse/compressed_cache.hpp"
#include "hierasparse/errors.hpp"
#include "hierasparse/fp16.hpp"

namespace hierasparse {

// On-disk image of one CompressedCache:
//
//   magic           8 bytes  "HSPARSE\0"
//   version         u16      1
//   block_size      u32
//   head_dim        u32
//   logical_blocks  u32
//   dense_count     u32
//   sparse_count    u32
//   n_keep          u16
//   m_group         u16
//   elem_width_tag  u16      1 = IEEE binary16
//   axis_tag        u16      0 = channel grouping, 1 = sequence grouping
//   4 sections, each a u64 payload byte length followed by the payload:
//     index_map   int16  × logical_blocks
//     dense_pool  uint16 × dense_count  · block elems   (binary16 bits)
//     nnz_pool    uint16 × sparse_count · nnz elems     (binary16 bits)
//     meta_pool   uint16 × sparse_count · words/block
//
// All multi-byte integers are little-endian.  Pool scalars are converted from
// the 32-bit working precision with round-to-nearest-even on write.

inline constexpr char kContainerMagic[8] = {'H', 'S', 'P', 'A', 'R', 'S', 'E', '\0'};
inline constexpr std::uint16_t kContainerVersion = 1;
inline constexpr std::uint16_t kElemWidthHalf = 1;
// Fixed bytes before the first section: magic + version + five u32 + four u16.
inline constexpr std::size_t kContainerHeaderBytes = 8 + 2 + 5 * 4 + 4 * 2;

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

// Bounds-checked little-endian cursor with byte-offset diagnostics.
class ByteReader {
public:
    explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n) {
            throw DataError("container truncated at offset " + std::to_string(pos_) +
                            " while reading " + what);
        }
    }

    void skip(std::size_t n, const char* what) {
        need(n, what);
        pos_ += n;
    }

    std::uint16_t u16(const char* what) {
        need(2, what);
        const std::uint16_t v = static_cast<std::uint16_t>(
            bytes_[pos_] | (static_cast<std::uint16_t>(bytes_[pos_ + 1]) << 8));
        pos_ += 2;
        return v;
    }

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

inline void check_section_length(const char* name, std::uint64_t declared,
                                 std::uint64_t expected, std::size_t at) {
    if (declared != expected) {
        throw DataError(std::string("container section '") + name + "' at offset " +
                        std::to_string(at) + " declares " + std::to_string(declared) +
                        " bytes, expected " + std::to_string(expected));
    }
}

} // namespace detail

inline std::vector<std::uint8_t> serialize(const CompressedCache& c) {
    std::vector<std::uint8_t> out;
    out.reserve(kContainerHeaderBytes + 4 * 8 + 2 * c.index_map.size() +
                2 * (c.dense_pool.size() + c.nnz_pool.size() + c.meta_pool.size()));

    for (char ch : kContainerMagic) out.push_back(static_cast<std::uint8_t>(ch));
    detail::put_u16(out, kContainerVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(c.cfg.block_size));
    detail::put_u32(out, static_cast<std::uint32_t>(c.head_dim));
    detail::put_u32(out, static_cast<std::uint32_t>(c.logical_blocks));
    detail::put_u32(out, static_cast<std::uint32_t>(c.dense_count));
    detail::put_u32(out, static_cast<std::uint32_t>(c.sparse_count));
    detail::put_u16(out, c.cfg.pattern.n_keep);
    detail::put_u16(out, c.cfg.pattern.m_group);
    detail::put_u16(out, kElemWidthHalf);
    detail::put_u16(out, static_cast<std::uint16_t>(c.axis));

    detail::put_u64(out, static_cast<std::uint64_t>(c.index_map.size()) * 2);
    for (std::int16_t e : c.index_map) detail::put_u16(out, static_cast<std::uint16_t>(e));

    detail::put_u64(out, static_cast<std::uint64_t>(c.dense_pool.size()) * 2);
    for (float v : c.dense_pool) detail::put_u16(out, float_to_half_bits(v));

    detail::put_u64(out, static_cast<std::uint64_t>(c.nnz_pool.size()) * 2);
    for (float v : c.nnz_pool) detail::put_u16(out, float_to_half_bits(v));

    detail::put_u64(out, static_cast<std::uint64_t>(c.meta_pool.size()) * 2);
    for (std::uint16_t w : c.meta_pool) detail::put_u16(out, w);

    return out;
}

inline CompressedCache parse(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader h(bytes);

    // Magic and version gate everything else; nothing sized by header claims
    // is allocated before they pass.
    h.need(8, "magic");
    if (std::memcmp(bytes.data(), kContainerMagic, 8) != 0) {
        throw DataError("container magic mismatch: not a cache container");
    }
    h.skip(8, "magic");
    const std::uint16_t version = h.u16("version");
    if (version != kContainerVersion) {
        throw DataError("unsupported container version " + std::to_string(version));
    }

    CompressedCache c;
    c.cfg.block_size = h.u32("block_size");
    c.head_dim = h.u32("head_dim");
    c.logical_blocks = h.u32("logical_blocks");
    c.dense_count = h.u32("dense_count");
    c.sparse_count = h.u32("sparse_count");
    c.cfg.pattern.n_keep = h.u16("n_keep");
    c.cfg.pattern.m_group = h.u16("m_group");
    const std::uint16_t width_tag = h.u16("elem_width_tag");
    const std::uint16_t axis_tag = h.u16("axis_tag");

    if (width_tag != kElemWidthHalf) {
        throw DataError("unsupported element width tag " + std::to_string(width_tag));
    }
    if (axis_tag > 1) {
        throw DataError("unsupported axis tag " + std::to_string(axis_tag));
    }
    c.axis = static_cast<GroupAxis>(axis_tag);
    detail::check_data(c.cfg.pattern.is_two_four(),
                       "container: unsupported N:M pattern " +
                           std::to_string(c.cfg.pattern.n_keep) + ":" +
                           std::to_string(c.cfg.pattern.m_group));
    detail::check_data(c.cfg.block_size > 0 && c.head_dim > 0,
                       "container: zero block_size or head_dim");
    detail::check_data(c.cfg.block_size % c.cfg.pattern.m_group == 0,
                       "container: block_size not divisible by m_group");
    detail::check_data(c.axis != GroupAxis::kChannel ||
                           c.head_dim % c.cfg.pattern.m_group == 0,
                       "container: channel-grouped head_dim not divisible by m_group");
    detail::check_data(c.dense_count + c.sparse_count == c.logical_blocks,
                       "container: pool counts do not sum to logical blocks");
    detail::check_data(c.dense_count <= detail::kMaxPoolBlocks &&
                           c.sparse_count <= detail::kMaxPoolBlocks,
                       "container: pool count exceeds int16 index capacity");

    // Section lengths are fully determined by the header; mismatches are
    // rejected before reading payloads.
    const auto read_section = [&](const char* name, std::size_t expected_items,
                                  auto&& store_item) {
        const std::size_t at = h.offset();
        const std::uint64_t len = h.u64(name);
        detail::check_section_length(name, len, static_cast<std::uint64_t>(expected_items) * 2,
                                     at);
        h.need(expected_items * 2, name);
        for (std::size_t i = 0; i < expected_items; ++i) store_item(h.u16(name));
    };

    c.index_map.reserve(c.logical_blocks);
    read_section("index_map", c.logical_blocks,
                 [&](std::uint16_t v) { c.index_map.push_back(static_cast<std::int16_t>(v)); });

    c.dense_pool.reserve(c.dense_count * c.dense_block_elems());
    read_section("dense_pool", c.dense_count * c.dense_block_elems(),
                 [&](std::uint16_t v) { c.dense_pool.push_back(half_bits_to_float(v)); });

    c.nnz_pool.reserve(c.sparse_count * c.nnz_block_elems());
    read_section("nnz_pool", c.sparse_count * c.nnz_block_elems(),
                 [&](std::uint16_t v) { c.nnz_pool.push_back(half_bits_to_float(v)); });

    c.meta_pool.reserve(c.sparse_count * c.meta_words_per_block());
    read_section("meta_pool", c.sparse_count * c.meta_words_per_block(),
                 [&](std::uint16_t v) { c.meta_pool.push_back(v); });

    if (h.remaining() != 0) {
        throw DataError("container holds " + std::to_string(h.remaining()) +
                        " trailing bytes after the last section");
    }

    // Structural validation of the index map: nonzero entries, in-range
    // offsets referencing every pool slot exactly once, counters consistent.
    std::vector<std::uint8_t> dense_seen(c.dense_count, 0), sparse_seen(c.sparse_count, 0);
    for (std::size_t b = 0; b < c.index_map.size(); ++b) {
        const std::int16_t e = c.index_map[b];
        detail::check_data(e != 0, "container: index map entry " + std::to_string(b) +
                                       " is zero");
        const std::size_t slot = static_cast<std::size_t>((e > 0 ? e : -e) - 1);
        auto& seen = (e > 0) ? dense_seen : sparse_seen;
        detail::check_data(slot < seen.size(), "container: index map entry " +
                                                   std::to_string(b) + " points past its pool");
        detail::check_data(!seen[slot], "container: pool slot referenced twice by entry " +
                                            std::to_string(b));
        seen[slot] = 1;
    }
    return c;
}

inline void save_cache(const std::string& path, const CompressedCache& c) {
    const std::vector<std::uint8_t> bytes = serialize(c);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write to '" + path + "'");
}

inline CompressedCache load_cache(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open '" + path + "' for reading");
    const std::streamsize size = f.tellg();
    f.seekg(0);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    f.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!f) throw IoError("short read from '" + path + "'");
    return parse(bytes);
}

} // namespace hierasparse
