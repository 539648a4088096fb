#ifndef FMCB_MODEL_IO_H_
#define FMCB_MODEL_IO_H_

#include <cstdint>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "fmcb/boost.h"
#include "fmcb/dataset.h"

namespace fmcb {

inline constexpr int kModelFormatVersion = 1;

// A model plus free-form provenance (seed, config, dataset hash, ...). The
// provenance is covered by the checksum but never interpreted by the loader.
struct ModelFile {
  Model model;
  nlohmann::json provenance = nlohmann::json::object();
};

// JSON text. Doubles are written in shortest round-trip form, so a reload
// reproduces every value bit for bit.
std::string serialize_model(const ModelFile& file);
// Throws ParseError on malformed or truncated text, an unknown format or
// version, a checksum mismatch, or an inconsistent model structure.
ModelFile deserialize_model(std::string_view text);

void save_model(const std::string& path, const ModelFile& file);
ModelFile load_model(const std::string& path);

// FNV-1a 64 over the raw feature bytes, labels and class names.
std::uint64_t dataset_fingerprint(const Dataset& ds);

nlohmann::json config_to_json(const BoostConfig& config);

}  // namespace fmcb

#endif  // FMCB_MODEL_IO_H_
