#include "cerf/numerics.hpp"

#include <string>

#include "cerf/error.hpp"

namespace cerf::numerics {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

int log2_exact(std::size_t n) {
    require(is_power_of_two(n), "log2_exact: " + std::to_string(n) + " is not a power of two");
    int m = 0;
    while ((std::size_t{1} << m) < n) ++m;
    return m;
}

std::uint64_t fwht(std::span<double> values) {
    const std::size_t n = values.size();
    if (!is_power_of_two(n))
        fail_argument("fwht: length " + std::to_string(n) + " is not a power of two");

    std::uint64_t ops = 0;
    for (std::size_t h = 1; h < n; h <<= 1) {
        for (std::size_t i = 0; i < n; i += 2 * h) {
            for (std::size_t j = i; j < i + h; ++j) {
                const double a = values[j];
                const double b = values[j + h];
                values[j] = a + b;
                values[j + h] = a - b;
            }
        }
        ops += n;
    }
    return ops;
}

Vector fwht(const Vector& values) {
    Vector out = values;
    fwht(std::span<double>(out.data(), static_cast<std::size_t>(out.size())));
    return out;
}

}  // namespace cerf::numerics
