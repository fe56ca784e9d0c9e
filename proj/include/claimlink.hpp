#pragma once

// Everything except the HTTP adapters, which live in claimlink/remote.hpp so
// that code without network needs does not compile the HTTP client.

#include "claimlink/clustering.hpp"
#include "claimlink/config.hpp"
#include "claimlink/corpus.hpp"
#include "claimlink/embed.hpp"
#include "claimlink/embedstore.hpp"
#include "claimlink/error.hpp"
#include "claimlink/eval.hpp"
#include "claimlink/hash.hpp"
#include "claimlink/langid.hpp"
#include "claimlink/languages.hpp"
#include "claimlink/negatives.hpp"
#include "claimlink/pipeline.hpp"
#include "claimlink/records.hpp"
#include "claimlink/rerank.hpp"
#include "claimlink/retrieval.hpp"
#include "claimlink/split.hpp"
#include "claimlink/text.hpp"
