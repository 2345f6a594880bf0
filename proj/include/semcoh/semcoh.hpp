#pragma once

#include "semcoh/captioner.hpp"
#include "semcoh/cluster_metrics.hpp"
#include "semcoh/corpus.hpp"
#include "semcoh/errors.hpp"
#include "semcoh/judgment_stats.hpp"
#include "semcoh/prng.hpp"
#include "semcoh/provenance.hpp"
#include "semcoh/retrieval.hpp"
#include "semcoh/study_config.hpp"
#include "semcoh/study_service.hpp"
#include "semcoh/task_forge.hpp"
#include "semcoh/toy_corpus.hpp"
