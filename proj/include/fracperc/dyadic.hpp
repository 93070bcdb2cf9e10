#pragma once

// Dyadic cubes and their packed (Morton / Z-order) codes.
//
// A level-n cube in [0,1)^d is stored as a Morton code: d bits per level,
// most significant level first, bit i of each group selecting the upper half
// along axis i. Children of a code c are (c << d) | j for j in [0, 2^d), so a
// sorted list of parents expands into a sorted list of children and all
// descendants of a cube occupy one contiguous code range.

#include <cstdint>
#include <span>
#include <vector>

namespace fracperc {

using CubeCode = std::uint64_t;

// Largest d*n for which a code fits.
inline constexpr int kMaxCodeBits = 62;

struct DyadicCube {
    int level = 0;
    std::vector<std::uint32_t> index;  // one entry per axis, each < 2^level

    int dim() const { return static_cast<int>(index.size()); }
    double side() const;
    double lower(int axis) const;
    double upper(int axis) const;
    double center(int axis) const;

    DyadicCube parent() const;
    // offset bit i selects the upper half along axis i
    DyadicCube child(unsigned offset) const;
    bool contains(const DyadicCube& other) const;

    friend bool operator==(const DyadicCube&, const DyadicCube&) = default;
};

CubeCode encode(std::span<const std::uint32_t> index, int level);
std::vector<std::uint32_t> decode(CubeCode code, int dim, int level);

inline CubeCode encode(const DyadicCube& q) { return encode(q.index, q.level); }
DyadicCube cube_from_code(CubeCode code, int dim, int level);

// Ancestor of a level-`level` code at level `ancestor_level` <= level.
inline CubeCode ancestor_code(CubeCode code, int dim, int level, int ancestor_level) {
    return code >> (dim * (level - ancestor_level));
}

// Half-open code range [first, last) of level-`to` descendants.
inline std::pair<CubeCode, CubeCode> descendant_range(CubeCode code, int dim, int from, int to) {
    const int shift = dim * (to - from);
    return {code << shift, (code + 1) << shift};
}

}  // namespace fracperc
