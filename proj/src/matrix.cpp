#include "post/matrix.hpp"

#include <cmath>

namespace post {

Matrix random_normal(std::size_t rows, std::size_t cols, Rng& rng, double scale) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
    return m;
}

bool all_finite(const Matrix& m) {
    for (std::size_t i = 0; i < m.size(); ++i)
        if (!std::isfinite(m.data()[i])) return false;
    return true;
}

}  // namespace post
