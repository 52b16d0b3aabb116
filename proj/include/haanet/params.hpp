#pragma once

#include <functional>
#include <string>

#include "haanet/ops.hpp"
#include "haanet/tensor.hpp"

namespace haanet {

/// Visits a named learnable tensor. Names are dot-separated paths.
template <typename S>
using ParamVisitor = std::function<void(const std::string&, Tensor<S>&)>;

template <typename S>
void visit_conv(Conv2d<S>& layer, const std::string& prefix,
                const ParamVisitor<S>& visit) {
  visit(prefix + ".weight", layer.weight);
  visit(prefix + ".bias", layer.bias);
}

}  // namespace haanet
