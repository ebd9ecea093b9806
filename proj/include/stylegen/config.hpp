#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stylegen/conditioner.hpp"
#include "stylegen/corpus.hpp"
#include "stylegen/guidance.hpp"
#include "stylegen/inversion.hpp"
#include "stylegen/model.hpp"
#include "stylegen/rvq.hpp"

namespace stylegen {

struct FeatureConfig {
  int window = 8;
  int hop = 4;
  int buckets = 127;
  int dim = 128;
  std::uint64_t seed = 99;
};

struct MetricsConfig {
  int k = 10;
  int n_samples = 200;
  int excerpt_len = 48;      // conditioning excerpt at evaluation
  int generate_len = 64;     // tokens generated per sample
  int store_chunk_len = 64;
  std::vector<int> streams = {1, 4};
  std::vector<double> betas = {1.0, 3.0, 5.0};
  int fixed_streams = 4;     // depth for the beta sweep and the ablation table
  std::uint64_t seed = 7;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "runs";
  CorpusConfig corpus;
  FeatureConfig features;
  ModelConfig model;
  ConditionerConfig conditioner;
  RvqConfig rvq;
  TrainConfig train;
  GuidanceSpec sampler;
  InversionConfig inversion;
  MetricsConfig metrics;
};

// All keys in dump order.
std::vector<std::string> config_keys();

// Text form of one key's current value.
std::string config_get(const RunConfig& config, const std::string& key);

// Throws ConfigError on an unknown key or an unparsable value.
void config_set(RunConfig& config, const std::string& key, const std::string& value);

// `key = value` lines; `#` starts a comment; blank lines ignored. Keys not
// present keep their defaults.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

// Every key with its effective value, one per line.
std::string dump_config(const RunConfig& config);

// Throws ConfigError when values are out of range or inconsistent.
void validate_config(const RunConfig& config);

}  // namespace stylegen
