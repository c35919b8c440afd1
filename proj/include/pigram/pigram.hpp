#pragma once

#include "pigram/cnf.hpp"
#include "pigram/common.hpp"
#include "pigram/corpus.hpp"
#include "pigram/decoder.hpp"
#include "pigram/dot.hpp"
#include "pigram/earley.hpp"
#include "pigram/grammar.hpp"
#include "pigram/grammar_io.hpp"
#include "pigram/induction.hpp"
#include "pigram/inside.hpp"
#include "pigram/matrix_io.hpp"
#include "pigram/metrics.hpp"
#include "pigram/sample.hpp"
#include "pigram/synth.hpp"
