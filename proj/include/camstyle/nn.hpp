#ifndef CAMSTYLE_NN_HPP_
#define CAMSTYLE_NN_HPP_

#include "camstyle/nn/activation.hpp"
#include "camstyle/nn/container.hpp"
#include "camstyle/nn/conv.hpp"
#include "camstyle/nn/dense.hpp"
#include "camstyle/nn/init.hpp"
#include "camstyle/nn/layer.hpp"
#include "camstyle/nn/norm.hpp"
#include "camstyle/nn/optimizer.hpp"
#include "camstyle/nn/serialize.hpp"

#endif  // CAMSTYLE_NN_HPP_
