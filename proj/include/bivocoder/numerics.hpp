#pragma once

#include "bivocoder/numerics/adamw.hpp"
#include "bivocoder/numerics/conv.hpp"
#include "bivocoder/numerics/norm.hpp"
#include "bivocoder/numerics/ops.hpp"
#include "bivocoder/numerics/tensor.hpp"
