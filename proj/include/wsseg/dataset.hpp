#pragma once

#include <string>
#include <vector>

#include "wsseg/synth.hpp"

namespace wsseg {

/// Samples index_offset .. index_offset+count-1 of the configured generator.
std::vector<Sample> generate_corpus(const SynthConfig& cfg, int count, int index_offset = 0);

/// Layout: images/<id>.png, masks/<id>.png, promptmasks/<id>.png,
/// annotations.json, manifest.json (config + seed for exact regeneration).
void write_corpus(const std::string& dir, const std::vector<Sample>& samples,
                  const SynthConfig& cfg);

/// Reads a corpus directory (own layout or a real dataset arranged the same
/// way; images may be PNG, JPEG, or PGM). A missing mask skips the image with
/// a warning on stderr; an unreadable file is an error naming the path.
/// Missing prompt masks only clear has_prompt.
std::vector<Sample> load_dataset(const std::string& dir);

/// Round-trips the generator config through manifest.json.
SynthConfig read_manifest(const std::string& dir);

std::string synth_config_to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const std::string& text);

}  // namespace wsseg
