#pragma once

#include "dcg/numgrad/gradcheck.hpp"
#include "dcg/numgrad/gru.hpp"
#include "dcg/numgrad/ops.hpp"
#include "dcg/numgrad/optim.hpp"
#include "dcg/numgrad/params.hpp"
#include "dcg/numgrad/tape.hpp"
#include "dcg/numgrad/tensor.hpp"
