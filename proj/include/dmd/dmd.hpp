#pragma once

#include "dmd/answer.hpp"
#include "dmd/core.hpp"
#include "dmd/datastore.hpp"
#include "dmd/dictionary.hpp"
#include "dmd/embedding_http.hpp"
#include "dmd/error.hpp"
#include "dmd/eval.hpp"
#include "dmd/features.hpp"
#include "dmd/guidance_explicit.hpp"
#include "dmd/guidance_implicit.hpp"
#include "dmd/judgment.hpp"
#include "dmd/lemmatizer.hpp"
#include "dmd/llm.hpp"
#include "dmd/llm_http.hpp"
#include "dmd/prompt.hpp"
#include "dmd/util.hpp"
