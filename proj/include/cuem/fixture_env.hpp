#pragma once

#include <map>
#include <string>

#include "cuem/config.hpp"
#include "cuem/pipeline.hpp"
#include "cuem/result.hpp"

namespace cuem {

// ---------------------------------------------------------------------------
// Environment assembly: turns an AppConfig into the PipelineEnv a run needs.
// Backends with a configured HTTP endpoint get the JSON-over-HTTP adapter;
// everything else is served by the deterministic fixture-backed mocks, loaded
// from these files under paths.fixtures_dir (each one optional — a missing
// file yields an empty table plus a warning):
//
//   corpus.json          [Document, ...]                     text search corpus
//   generator.json       {default_output?, model_id?,        scripted generator
//                         entries: [{id, match: [], output}]}
//   captions.json        {content_digest: caption}           image describer
//   similar.json         {content_digest:                    similar-image search
//                         [{doc: Document, similarity: r}]}
//   token_lexicons.json  {api_id: [trigger, ...]}            API token scorer
//   blocklist.json       [term, ...]                         text safety prefilter
//   image_safety.json    {content_digest: bool}              image safety prefilter
//   images.json          [ImageRef, ...]                     image asset index
//
// The instance database, interaction log, and API registry load from their
// own [paths] entries; a missing instance db or interaction log starts empty
// with a warning (first run), while a configured-but-malformed file is an
// error.
// ---------------------------------------------------------------------------

/// A fully wired pipeline environment plus the image asset index that lets
/// callers address fixture images by id.
struct LoadedEnv {
    PipelineEnv env;
    std::map<std::string, ImageRef> images;
};

Result<LoadedEnv> load_env(const AppConfig& cfg, Warnings* warnings = nullptr);

}  // namespace cuem
