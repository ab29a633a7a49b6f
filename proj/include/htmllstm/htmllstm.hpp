#pragma once

// Everything at once.

#include "htmllstm/config.hpp"
#include "htmllstm/corpus.hpp"
#include "htmllstm/dom.hpp"
#include "htmllstm/encoder.hpp"
#include "htmllstm/error.hpp"
#include "htmllstm/gradcheck.hpp"
#include "htmllstm/integrate.hpp"
#include "htmllstm/loss.hpp"
#include "htmllstm/metrics.hpp"
#include "htmllstm/model.hpp"
#include "htmllstm/optim.hpp"
#include "htmllstm/random.hpp"
#include "htmllstm/synth.hpp"
#include "htmllstm/tagger.hpp"
#include "htmllstm/tensor.hpp"
#include "htmllstm/training.hpp"
#include "htmllstm/tree_ops.hpp"
#include "htmllstm/vocab.hpp"
