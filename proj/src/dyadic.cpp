#include "fracperc/dyadic.hpp"

#include <cmath>
#include <stdexcept>

namespace fracperc {

double DyadicCube::side() const { return std::ldexp(1.0, -level); }
double DyadicCube::lower(int axis) const { return std::ldexp(static_cast<double>(index[axis]), -level); }
double DyadicCube::upper(int axis) const { return std::ldexp(static_cast<double>(index[axis]) + 1.0, -level); }
double DyadicCube::center(int axis) const {
    return std::ldexp(2.0 * static_cast<double>(index[axis]) + 1.0, -(level + 1));
}

DyadicCube DyadicCube::parent() const {
    if (level == 0) throw std::invalid_argument("root cube has no parent");
    DyadicCube p{level - 1, index};
    for (auto& i : p.index) i >>= 1;
    return p;
}

DyadicCube DyadicCube::child(unsigned offset) const {
    DyadicCube c{level + 1, index};
    for (std::size_t a = 0; a < c.index.size(); ++a) c.index[a] = 2 * c.index[a] + ((offset >> a) & 1U);
    return c;
}

bool DyadicCube::contains(const DyadicCube& other) const {
    if (other.dim() != dim() || other.level < level) return false;
    const int shift = other.level - level;
    for (std::size_t a = 0; a < index.size(); ++a)
        if ((other.index[a] >> shift) != index[a]) return false;
    return true;
}

CubeCode encode(std::span<const std::uint32_t> index, int level) {
    const int d = static_cast<int>(index.size());
    if (d * level > kMaxCodeBits) throw std::invalid_argument("cube address does not fit in a 64-bit code");
    CubeCode code = 0;
    for (int l = level - 1; l >= 0; --l) {
        for (int a = d - 1; a >= 0; --a) code = (code << 1) | ((index[a] >> l) & 1U);
    }
    return code;
}

std::vector<std::uint32_t> decode(CubeCode code, int dim, int level) {
    std::vector<std::uint32_t> index(dim, 0);
    for (int l = 0; l < level; ++l) {
        for (int a = 0; a < dim; ++a) {
            index[a] |= static_cast<std::uint32_t>((code >> (l * dim + a)) & 1U) << l;
        }
    }
    return index;
}

DyadicCube cube_from_code(CubeCode code, int dim, int level) { return {level, decode(code, dim, level)}; }

}  // namespace fracperc
