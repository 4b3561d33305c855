#pragma once

#include "resq/bitstream.hpp"
#include "resq/dataset.hpp"
#include "resq/error.hpp"
#include "resq/matrix.hpp"
#include "resq/metrics.hpp"
#include "resq/nn.hpp"
#include "resq/qinco.hpp"
#include "resq/quantizer.hpp"
#include "resq/rvq.hpp"
#include "resq/vq_core.hpp"
