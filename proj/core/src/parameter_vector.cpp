#include "fedrlhf/parameter_vector.hpp"

#include <cstring>

namespace fedrlhf {

bool bitwise_equal(const ParameterVector& a, const ParameterVector& b) {
    if (a.dim() != b.dim()) return false;
    if (a.dim() == 0) return true;
    return std::memcmp(a.data(), b.data(), a.dim() * sizeof(double)) == 0;
}

}  // namespace fedrlhf
