#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"
#include "scalechain/codec.hpp"
#include "scalechain/error.hpp"
#include "scalechain/metrics.hpp"

namespace scalechain {

namespace fs = std::filesystem;

namespace {

bool find_executable(const std::string& name) {
  if (name.find('/') != std::string::npos) return access(name.c_str(), X_OK) == 0;
  const char* path = std::getenv("PATH");
  if (!path) return false;
  std::istringstream dirs(path);
  std::string dir;
  while (std::getline(dirs, dir, ':')) {
    if (dir.empty()) continue;
    if (access((fs::path(dir) / name).c_str(), X_OK) == 0) return true;
  }
  return false;
}

VmafScores unavailable(std::string reason) {
  VmafScores s;
  s.reason = std::move(reason);
  return s;
}

}  // namespace

VmafScores parse_vmaf_json(std::string_view json) {
  const auto doc = nlohmann::json::parse(json.begin(), json.end(), nullptr, false);
  if (doc.is_discarded()) return unavailable("scorer output is not valid JSON");
  VmafScores s;
  if (doc.contains("frames") && doc["frames"].is_array()) {
    for (const auto& frame : doc["frames"]) {
      const auto& m = frame.value("metrics", nlohmann::json::object());
      if (m.contains("vmaf") && m["vmaf"].is_number()) s.per_frame.push_back(m["vmaf"].get<double>());
    }
  }
  if (doc.contains("pooled_metrics") && doc["pooled_metrics"].contains("vmaf") &&
      doc["pooled_metrics"]["vmaf"].contains("mean")) {
    s.pooled = doc["pooled_metrics"]["vmaf"]["mean"].get<double>();
  } else if (!s.per_frame.empty()) {
    double sum = 0.0;
    for (double v : s.per_frame) sum += v;
    s.pooled = sum / static_cast<double>(s.per_frame.size());
  } else {
    return unavailable("scorer output carries no vmaf scores");
  }
  s.available = true;
  return s;
}

VmafScores vmaf_external(const std::string& ref_path, const std::string& test_path, const VmafOptions& opts) {
  if (opts.binary.empty()) return unavailable("VMAF disabled (no scorer configured)");
  if (!find_executable(opts.binary)) return unavailable("VMAF scorer '" + opts.binary + "' not found");

  const fs::path dir = opts.work_dir.empty() ? fs::temp_directory_path() : fs::path(opts.work_dir);
  std::string pattern = (dir / "scalechain-vmaf-XXXXXX").string();
  if (!mkdtemp(pattern.data())) return unavailable("cannot create scratch directory");
  const fs::path scratch = pattern;
  const fs::path out = scratch / "vmaf.json";

  std::vector<std::string> argv{opts.binary, "--reference", ref_path, "--distorted", test_path, "--json",
                                "--output", out.string()};
  if (!opts.model.empty()) {
    argv.push_back("--model");
    const bool is_file = opts.model.find('/') != std::string::npos || opts.model.ends_with(".json") ||
                         opts.model.ends_with(".pkl");
    argv.push_back((is_file ? "path=" : "version=") + opts.model);
  }

  VmafScores s;
  const ProcessResult r = run_process(argv, (scratch / "vmaf.log").string());
  if (r.exit_code != 0) {
    s = unavailable("VMAF scorer exited with " + std::to_string(r.exit_code));
  } else {
    std::ifstream in(out);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    s = parse_vmaf_json(text);
  }
  s.model = opts.model.empty() ? "default" : opts.model;
  s.command = join_command(argv);
  std::error_code ec;
  fs::remove_all(scratch, ec);
  return s;
}

}  // namespace scalechain
