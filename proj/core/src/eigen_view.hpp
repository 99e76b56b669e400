#pragma once

// Internal: zero-copy Eigen views over Tensor2 storage.

#include "appp/tensor.hpp"

#include <Eigen/Core>

namespace appp::detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

inline MatMap view(Tensor2& t) {
    return {t.values().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

inline ConstMatMap view(const Tensor2& t) {
    return {t.values().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

} // namespace appp::detail
