#pragma once

// Pipeline orchestration behind the graphdmd command-line tool. Every
// command reads a validated configuration, writes into an output directory
// and is reproducible byte for byte given the same configuration.

#include "gdmd/common.hpp"

#include <json.hpp>

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace gdmd::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

/// Published schemas (tools/schema/*.schema.json).
const json& config_schema();
const json& mode_schema();

/// Validates `value` against a schema subset: type, enum, properties,
/// additionalProperties, required, items, minItems, maxItems, minimum,
/// maximum, exclusiveMinimum. Returns one message per violation.
std::vector<std::string> validate(const json& value, const json& schema, const std::string& where = "$");

/// Validates and fills defaults. Throws Error(Config) listing every violation.
json canonicalize(const json& raw);

/// Stable text form: sorted keys, two-space indent, trailing newline.
std::string serialize(const json& cfg);

/// Reads and canonicalizes a config file; an empty path yields the defaults.
json load_config(const fs::path& path);

/// GDMD_SEED and GDMD_WORKERS override seed and workers. Malformed values
/// throw Error(Config).
void apply_env_overrides(json& cfg);

/// Per-stage seeds fanned out from the root seed.
enum class Stream : std::uint64_t { Simulate = 1, Ica = 2, Koopman = 3, Cluster = 4, Regress = 5 };
std::uint64_t stage_seed(const json& cfg, Stream stream);

/// Stage name reported when a command fails.
struct Context {
  std::string stage = "config";
};

void cmd_simulate(const json& cfg, const fs::path& out, Context& ctx);
void cmd_dnfc(const json& cfg, const fs::path& out, Context& ctx);
void cmd_train_koopman(const json& cfg, const fs::path& out, Context& ctx);
void cmd_decompose(const json& cfg, const fs::path& out, Context& ctx);
void cmd_postprocess(const json& cfg, const fs::path& out, Context& ctx);
void cmd_regress(const json& cfg, const fs::path& out, Context& ctx);
void cmd_render(const json& cfg, const fs::path& out, Context& ctx);

const std::vector<std::string>& command_names();

/// Loads the config, applies overrides, runs `command` and maps failures to
/// exit codes: 0 ok, 1 stage error, 2 configuration error. Errors are
/// written to `err` as one JSON object {stage, code, message}.
int run(const std::string& command, const fs::path& config_path, const fs::path& out, std::ostream& err);

/// Heatmap with a diverging palette; color limits and shape go in <metadata>.
std::string render_svg(const Mat& m, double vmin, double vmax, int cell, const std::string& title);

}  // namespace gdmd::pipeline
