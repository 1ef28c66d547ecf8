#pragma once

#include "relpara/analysis.hpp"
#include "relpara/bertscore.hpp"
#include "relpara/client.hpp"
#include "relpara/completion.hpp"
#include "relpara/config.hpp"
#include "relpara/corpus.hpp"
#include "relpara/error.hpp"
#include "relpara/executor.hpp"
#include "relpara/metrics.hpp"
#include "relpara/mock.hpp"
#include "relpara/perturb.hpp"
#include "relpara/pipeline.hpp"
#include "relpara/prompts.hpp"
#include "relpara/random.hpp"
#include "relpara/relevance.hpp"
#include "relpara/report.hpp"
#include "relpara/rouge.hpp"
#include "relpara/text.hpp"
