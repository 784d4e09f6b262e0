#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "scalechain/codec.hpp"
#include "scalechain/frame_io.hpp"
#include "scalechain/metrics.hpp"
#include "scalechain/resample.hpp"
#include "scalechain/sr_models.hpp"

namespace scalechain {

inline constexpr int kConfigVersion = 1;

struct SequenceEntry {
  std::string name;
  std::string path;
  std::size_t frames = 30;
  // Required for headerless .yuv input; optional otherwise.
  std::optional<VideoSpec> raw_spec;
  std::optional<std::pair<int, int>> fps_override;
};

struct CodecChoice {
  enum class Kind { kMock, kExternal };
  Kind kind = Kind::kMock;
  EncoderTemplate tmpl;
  bool keep = false;
};

struct ExperimentConfig {
  int version = kConfigVersion;
  std::vector<SequenceEntry> sequences;
  QpProtocol qps;
  std::vector<Upscaler> upscalers{Upscaler::kBicubic, Upscaler::kBackProjection, Upscaler::kVdsr, Upscaler::kRdn};
  CodecChoice codec;
  // A weight file path, "zero", or "random:SEED[:GAIN]".
  std::string vdsr_weights;
  std::string rdn_weights;
  std::string output_dir = "out";
  VmafOptions vmaf;
  KernelSpec kernel;
  double gauss_sigma = 1.0;
  int bp_iterations = 5;
  BdMode bd_mode = BdMode::kPchip;
  int jobs = 1;
  bool cache = true;
  float input_scale = 1.0f;
  RdnInputMode rdn_input = RdnInputMode::kReplicateY;
  TileOptions tiles;

  void validate() const;
  // Canonical JSON text of the configuration (the provenance hash input).
  std::string canonical_json() const;
};

// Parses the JSON configuration; relative paths resolve against `base_dir`.
ExperimentConfig parse_config(const std::string& json_text, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

// Builds an upscaling context, loading or synthesizing the weights that the
// selected upscalers need.
UpscaleContext make_upscale_context(const ExperimentConfig& config);

// "zero", "random:SEED[:GAIN]" or a weight file path.
inline constexpr float kDefaultRandomGain = 0.7f;
ModelWeights resolve_weights(const std::string& source, bool rdn);

// ---------------------------------------------------------------------------

class Codec {
 public:
  virtual ~Codec() = default;
  virtual CodecRun run(std::span<const FrameBuffer> frames, int qp) const = 0;
  // Stable description used for cache keys and provenance.
  virtual std::string identity() const = 0;
};

class MockCodec final : public Codec {
 public:
  CodecRun run(std::span<const FrameBuffer> frames, int qp) const override;
  std::string identity() const override;
};

class ExternalCodec final : public Codec {
 public:
  ExternalCodec(EncoderTemplate tmpl, ExternalCodecOptions opts) : tmpl_(std::move(tmpl)), opts_(std::move(opts)) {}
  CodecRun run(std::span<const FrameBuffer> frames, int qp) const override;
  std::string identity() const override;

 private:
  EncoderTemplate tmpl_;
  ExternalCodecOptions opts_;
};

std::unique_ptr<Codec> make_codec(const CodecChoice& choice, const std::string& work_dir);

std::uint64_t content_hash(std::span<const FrameBuffer> frames);

// Codec runs keyed by (frame content hash, codec identity, QP). Optionally
// persisted under `dir` so reruns skip the codec.
class CodecCache {
 public:
  explicit CodecCache(std::string dir = {}) : dir_(std::move(dir)) {}

  std::shared_ptr<const CodecRun> get(const Codec& codec, std::span<const FrameBuffer> frames, int qp);

  std::size_t codec_invocations() const { return invocations_; }
  std::size_t disk_hits() const { return disk_hits_; }

 private:
  std::string dir_;
  std::mutex mutex_;
  std::map<std::string, std::shared_future<std::shared_ptr<const CodecRun>>> runs_;
  std::size_t invocations_ = 0;
  std::size_t disk_hits_ = 0;
};

struct LoadedSequence {
  std::string name;
  std::string path;
  VideoSpec spec;
  std::vector<FrameBuffer> frames;
};

LoadedSequence load_sequence(const SequenceEntry& entry);

inline constexpr std::string_view kMetricPsnr = "psnr_y";
inline constexpr std::string_view kMetricVmaf = "vmaf";
inline constexpr std::string_view kBranchConventional = "conventional";
inline constexpr std::string_view kBranchScaled = "scaled";

struct CellFailure {
  std::string sequence;
  std::string branch;
  std::string upscaler;
  int qp = 0;
  std::string error;
};

struct BranchOptions {
  // Codec QP runs executed concurrently.
  int jobs = 1;
  VmafOptions vmaf;
  std::string work_dir;
};

struct BranchResult {
  std::vector<RdCurve> curves;  // one per metric
  std::vector<CellFailure> failures;
  std::vector<std::string> commands;
  std::string vmaf_status;
};

BranchResult run_conventional_branch(const LoadedSequence& seq, std::span<const int> qps, const Codec& codec,
                                     CodecCache& cache, const BranchOptions& opts = {});

struct ScaledBranchSettings {
  Upscaler upscaler = Upscaler::kBicubic;
  const UpscaleContext* context = nullptr;
  double gauss_sigma = 1.0;
};

// Downscale (Gaussian prefilter only for back-projection), code, upscale,
// and score against the original. Upscalers fed the same low-resolution
// frames share codec runs through `cache`.
BranchResult run_scaled_branch(const LoadedSequence& seq, std::span<const int> qps, const Codec& codec,
                               CodecCache& cache, const ScaledBranchSettings& settings,
                               const BranchOptions& opts = {});

// ---------------------------------------------------------------------------
// Reports

std::string format_rd_csv(std::span<const RdCurve> curves, std::span<const CellFailure> failures = {});
struct ParsedRdCsv {
  std::vector<RdCurve> curves;
  std::vector<CellFailure> failures;
};
ParsedRdCsv parse_rd_csv(const std::string& text);

struct QpWindow {
  std::string name;
  std::vector<int> scaled;
  std::vector<int> conv;  // empty lists select all points
};

std::vector<QpWindow> default_qp_windows();

struct BdRow {
  std::string sequence;  // "Average overall" for the mean row
  std::string metric;
  std::string window;
  std::string upscaler;
  double value = std::nan("");
  double pchip = std::nan("");
  double poly3 = std::nan("");
  bool modes_disagree = false;
  std::string note;
};

inline constexpr std::string_view kAverageRow = "Average overall";
inline constexpr double kModeDisagreementPercent = 0.5;

// BD savings of every scaled curve against the conventional curve of the same
// sequence and metric, per QP window, plus average rows.
std::vector<BdRow> compute_bd_table(std::span<const RdCurve> curves, BdMode mode,
                                    std::span<const QpWindow> windows);
std::string format_bd_csv(std::span<const BdRow> rows, BdMode mode);

struct CriticalRate {
  std::string sequence;
  std::string metric;
  std::string upscaler;
  std::optional<double> kbps;
  std::string note;
};

std::vector<CriticalRate> compute_critical_rates(std::span<const RdCurve> curves);

std::string render_rd_svg(std::span<const RdCurve> curves, const std::string& title);
// Writes plots/<sequence>_<metric>.svg files; returns the written paths.
std::vector<std::string> write_plots(std::span<const RdCurve> curves, const std::string& out_dir);

struct Provenance {
  std::string version;
  std::string config_hash;
  std::vector<std::string> commands;
  std::map<std::string, std::string> weights;
  std::string vmaf_status;
  std::size_t codec_invocations = 0;
  std::size_t cache_hits = 0;
  double wall_seconds = 0.0;
};

struct ExperimentReport {
  std::vector<RdCurve> curves;
  std::vector<CellFailure> failures;
  std::vector<BdRow> bd_rows;
  std::vector<CriticalRate> critical;
  Provenance provenance;
  BdMode mode = BdMode::kPchip;
  std::size_t expected_cells = 0;
  std::size_t present_cells = 0;

  std::string rd_csv() const;
  std::string bd_csv() const;
  std::string text() const;
};

ExperimentReport build_report(std::vector<RdCurve> curves, std::vector<CellFailure> failures, BdMode mode,
                              Provenance provenance);

// Runs every configured branch and writes rd_points.csv, bd_table.csv,
// report.txt and plots/*.svg into config.output_dir.
ExperimentReport run_experiment(const ExperimentConfig& config, const std::string& config_text = {});

}  // namespace scalechain
