#pragma once

#include "cy2mixer/config.hpp"
#include "cy2mixer/data.hpp"
#include "cy2mixer/encodings.hpp"
#include "cy2mixer/error.hpp"
#include "cy2mixer/gf2.hpp"
#include "cy2mixer/graph.hpp"
#include "cy2mixer/io.hpp"
#include "cy2mixer/matrix.hpp"
#include "cy2mixer/metrics.hpp"
#include "cy2mixer/model.hpp"
#include "cy2mixer/ops.hpp"
#include "cy2mixer/tensor.hpp"
#include "cy2mixer/topology.hpp"
#include "cy2mixer/train.hpp"
