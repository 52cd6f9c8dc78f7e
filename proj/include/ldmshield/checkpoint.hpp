#pragma once

#include <memory>
#include <string>
#include <utility>

#include <json.hpp>

#include "ldmshield/analysis.hpp"
#include "ldmshield/autoencoder.hpp"
#include "ldmshield/unet.hpp"

namespace ldms {

// Array container ("LDSA"): magic, version, dtype tag, shape header, JSON
// metadata, little-endian float64 payload, trailing CRC32. import_* validate
// the checksum and reject unknown versions, so truncated or corrupt files
// fail loudly.
void export_array(const Tensor& t, const nlohmann::json& meta, const std::string& path);
std::pair<Tensor, nlohmann::json> import_array(const std::string& path);

void export_bias_field(const BiasField& field, const std::string& path);
BiasField import_bias_field(const std::string& path);

// Model checkpoint ("LDSC"): JSON metadata plus named weight arrays.
void save_store(const ad::ParamStore& store, const nlohmann::json& meta, const std::string& path);
std::pair<nlohmann::json, std::map<std::string, Tensor>> load_store(const std::string& path);

void save_unet(const UNetModel& model, const std::string& path,
               const nlohmann::json& extra_meta = {});
std::unique_ptr<UNetModel> load_unet(const std::string& path, nlohmann::json* meta_out = nullptr);

void save_conv_autoencoder(ConvAutoencoder& ae, const std::string& path,
                           const nlohmann::json& extra_meta = {});
std::unique_ptr<ConvAutoencoder> load_conv_autoencoder(const std::string& path,
                                                       nlohmann::json* meta_out = nullptr);

// Adapter weights stored apart from the base model; merge-on-load supported.
void save_adapters(const UNetModel& model, const std::string& path);
void load_adapters_into(UNetModel& model, const std::string& path, bool merge = false);

std::string store_hash(const ad::ParamStore& store);

}  // namespace ldms
