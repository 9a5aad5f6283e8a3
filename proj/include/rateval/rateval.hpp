#pragma once

#include "rateval/agreement.hpp"
#include "rateval/chat_http.hpp"
#include "rateval/corpus.hpp"
#include "rateval/embed.hpp"
#include "rateval/embed_http.hpp"
#include "rateval/error.hpp"
#include "rateval/fixtures.hpp"
#include "rateval/http.hpp"
#include "rateval/io.hpp"
#include "rateval/matrix.hpp"
#include "rateval/pipeline.hpp"
#include "rateval/raterclient.hpp"
#include "rateval/reduce.hpp"
#include "rateval/report.hpp"
#include "rateval/selftest.hpp"
#include "rateval/similarity.hpp"
#include "rateval/textprep.hpp"
