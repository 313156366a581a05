#pragma once

#include "convsum/attention.hpp"
#include "convsum/checkpoint.hpp"
#include "convsum/commands.hpp"
#include "convsum/config.hpp"
#include "convsum/corpus.hpp"
#include "convsum/decoding.hpp"
#include "convsum/error.hpp"
#include "convsum/loss.hpp"
#include "convsum/model.hpp"
#include "convsum/ops.hpp"
#include "convsum/optim.hpp"
#include "convsum/parameters.hpp"
#include "convsum/provider.hpp"
#include "convsum/rouge.hpp"
#include "convsum/tensor.hpp"
#include "convsum/tokenizer.hpp"
#include "convsum/windowing.hpp"
