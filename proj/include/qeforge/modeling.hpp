#pragma once

#include "qeforge/modeling/encoder.hpp"
#include "qeforge/modeling/optimizer.hpp"
#include "qeforge/modeling/qe_model.hpp"
#include "qeforge/modeling/registry.hpp"
#include "qeforge/modeling/render.hpp"
#include "qeforge/modeling/seq2seq.hpp"
#include "qeforge/modeling/toy_encoder.hpp"
#include "qeforge/modeling/vocabulary.hpp"
