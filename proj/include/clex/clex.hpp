#pragma once

#include "checkpoint.hpp"
#include "cnn.hpp"
#include "common.hpp"
#include "config.hpp"
#include "context.hpp"
#include "corpus.hpp"
#include "embeddings.hpp"
#include "eval.hpp"
#include "lanczos.hpp"
#include "model.hpp"
#include "pipeline.hpp"
#include "splex.hpp"
#include "synthetic.hpp"
#include "text.hpp"
