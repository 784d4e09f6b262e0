#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "scalechain/error.hpp"
#include "scalechain/experiment.hpp"

namespace scalechain {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v, int decimals = 6) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s == "-0." + std::string(decimals, '0')) s.erase(0, 1);
  return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_number(const std::string& s, int line_no) {
  if (s == "inf") return kLosslessPsnr;
  if (s == "-inf") return -kLosslessPsnr;
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::kMalformedHeader, "line " + std::to_string(line_no) + ": bad number '" + s + "'");
  }
}

const RdCurve* find_curve(std::span<const RdCurve> curves, const std::string& seq, const std::string& metric,
                          const std::string& upscaler) {
  for (const auto& c : curves)
    if (c.sequence == seq && c.metric == metric && c.upscaler == upscaler) return &c;
  return nullptr;
}

bool is_conventional(const RdCurve& c) {
  return c.upscaler == "none" || (!c.points.empty() && c.points.front().branch == kBranchConventional);
}

std::string branch_of(const RdCurve& c) {
  if (!c.points.empty()) return c.points.front().branch;
  return c.upscaler == "none" ? std::string(kBranchConventional) : std::string(kBranchScaled);
}

bool has_lossless(const RdCurve& c) {
  return std::any_of(c.points.begin(), c.points.end(), [](const RdPoint& p) { return std::isinf(p.quality); });
}

}  // namespace

std::string format_rd_csv(std::span<const RdCurve> curves, std::span<const CellFailure> failures) {
  std::string out = "sequence,branch,upscaler,metric,qp,rate_kbps,quality\n";
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      out += c.sequence + "," + (p.branch.empty() ? branch_of(c) : p.branch) + "," + c.upscaler + "," + c.metric +
             "," + std::to_string(p.qp) + "," + fmt(p.rate_kbps) + "," + fmt(p.quality) + "\n";
    }
  }
  for (const auto& f : failures) {
    out += f.sequence + "," + f.branch + "," + f.upscaler + "," + std::string(kMetricPsnr) + "," +
           std::to_string(f.qp) + ",NA,FAILED\n";
  }
  return out;
}

ParsedRdCsv parse_rd_csv(const std::string& text) {
  ParsedRdCsv out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (line_no == 1) {
      if (f.size() != 7 || f[0] != "sequence" || f[6] != "quality")
        fail(ErrorCode::kMalformedHeader, "RD CSV header must be sequence,branch,upscaler,metric,qp,rate_kbps,quality");
      continue;
    }
    if (f.size() != 7) fail(ErrorCode::kMalformedHeader, "line " + std::to_string(line_no) + ": expected 7 fields");
    int qp = static_cast<int>(parse_number(f[4], line_no));
    if (f[6] == "FAILED") {
      out.failures.push_back({f[0], f[1], f[2], qp, "recorded as failed"});
      continue;
    }
    std::string key = f[0] + "\x1f" + f[2] + "\x1f" + f[3];
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.curves.size()).first;
      out.curves.push_back(RdCurve{{}, f[0], f[2], f[3]});
    }
    out.curves[it->second].points.push_back({parse_number(f[5], line_no), parse_number(f[6], line_no), qp, f[1]});
  }
  if (line_no == 0) fail(ErrorCode::kMalformedHeader, "empty RD CSV");
  return out;
}

std::vector<QpWindow> default_qp_windows() {
  return {
      {"high_qp", {34, 36, 38, 40}, {42, 44, 46, 48}},
      {"low_qp", {26, 28, 30, 32}, {34, 36, 38, 40}},
      {"full", {}, {}},
  };
}

std::vector<BdRow> compute_bd_table(std::span<const RdCurve> curves, BdMode mode, std::span<const QpWindow> windows) {
  std::vector<BdRow> rows;
  std::vector<std::string> metrics, upscalers;
  auto remember = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (const auto& c : curves) {
    remember(metrics, c.metric);
    if (!is_conventional(c)) remember(upscalers, c.upscaler);
  }

  for (const auto& metric : metrics) {
    for (const auto& w : windows) {
      std::map<std::string, std::vector<double>> per_upscaler;
      std::map<std::string, std::size_t> attempted;
      for (const auto& anchor_full : curves) {
        if (anchor_full.metric != metric || !is_conventional(anchor_full)) continue;
        for (const auto& up : upscalers) {
          const RdCurve* test_full = find_curve(curves, anchor_full.sequence, metric, up);
          if (!test_full) continue;
          RdCurve anchor = w.conv.empty() ? anchor_full : anchor_full.subset(w.conv);
          RdCurve test = w.scaled.empty() ? *test_full : test_full->subset(w.scaled);
          BdRow row;
          row.sequence = anchor_full.sequence;
          row.metric = metric;
          row.window = w.name;
          row.upscaler = up;
          std::vector<std::string> notes;
          if (has_lossless(anchor) || has_lossless(test)) notes.push_back("lossless points excluded");
          try {
            row.pchip = bd_rate(anchor, test, BdMode::kPchip).bd_rate_percent;
          } catch (const Error& e) {
            notes.push_back(std::string("pchip: ") + std::string(to_string(e.code())));
          }
          try {
            row.poly3 = bd_rate(anchor, test, BdMode::kPoly3).bd_rate_percent;
          } catch (const Error& e) {
            notes.push_back(std::string("poly3: ") + std::string(to_string(e.code())));
          }
          row.value = mode == BdMode::kPchip ? row.pchip : row.poly3;
          row.modes_disagree = std::isfinite(row.pchip) && std::isfinite(row.poly3) &&
                               std::abs(row.pchip - row.poly3) > kModeDisagreementPercent;
          for (std::size_t i = 0; i < notes.size(); ++i) row.note += (i ? "; " : "") + notes[i];
          ++attempted[up];
          if (std::isfinite(row.value)) per_upscaler[up].push_back(row.value);
          rows.push_back(std::move(row));
        }
      }
      for (const auto& up : upscalers) {
        if (!attempted[up]) continue;
        BdRow avg;
        avg.sequence = std::string(kAverageRow);
        avg.metric = metric;
        avg.window = w.name;
        avg.upscaler = up;
        double pchip_sum = 0.0, poly_sum = 0.0;
        std::size_t pchip_n = 0, poly_n = 0;
        for (const auto& r : rows) {
          if (r.metric != metric || r.window != w.name || r.upscaler != up || r.sequence == kAverageRow) continue;
          if (std::isfinite(r.pchip)) pchip_sum += r.pchip, ++pchip_n;
          if (std::isfinite(r.poly3)) poly_sum += r.poly3, ++poly_n;
        }
        if (pchip_n) avg.pchip = pchip_sum / static_cast<double>(pchip_n);
        if (poly_n) avg.poly3 = poly_sum / static_cast<double>(poly_n);
        avg.value = mode == BdMode::kPchip ? avg.pchip : avg.poly3;
        avg.modes_disagree = std::isfinite(avg.pchip) && std::isfinite(avg.poly3) &&
                             std::abs(avg.pchip - avg.poly3) > kModeDisagreementPercent;
        std::size_t used = per_upscaler[up].size();
        if (used != attempted[up])
          avg.note = "mean of " + std::to_string(used) + " of " + std::to_string(attempted[up]) + " sequences";
        rows.push_back(std::move(avg));
      }
    }
  }
  return rows;
}

std::string format_bd_csv(std::span<const BdRow> rows, BdMode mode) {
  std::string out = "sequence,metric,window,upscaler,bd_rate_percent,pchip,poly3,modes_disagree,mode,note\n";
  for (const auto& r : rows) {
    out += r.sequence + "," + r.metric + "," + r.window + "," + r.upscaler + "," + fmt(r.value) + "," + fmt(r.pchip) +
           "," + fmt(r.poly3) + "," + (r.modes_disagree ? "yes" : "no") + "," + std::string(to_string(mode)) + "," +
           r.note + "\n";
  }
  return out;
}

std::vector<CriticalRate> compute_critical_rates(std::span<const RdCurve> curves) {
  std::vector<CriticalRate> out;
  for (const auto& conv : curves) {
    if (!is_conventional(conv)) continue;
    for (const auto& c : curves) {
      if (is_conventional(c) || c.sequence != conv.sequence || c.metric != conv.metric) continue;
      CriticalRate cr{c.sequence, c.metric, c.upscaler, std::nullopt, ""};
      try {
        cr.kbps = critical_bitrate(conv, c);
        if (!cr.kbps) cr.note = "no crossing in common range";
      } catch (const Error& e) {
        cr.note = std::string(to_string(e.code()));
      }
      out.push_back(std::move(cr));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// SVG

std::string render_rd_svg(std::span<const RdCurve> curves, const std::string& title) {
  constexpr double kW = 640, kH = 420, kL = 70, kR = 160, kT = 40, kB = 50;
  static const char* kColors[] = {"#000000", "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& c : curves) {
    for (const auto& p : c.usable_points()) {
      xmin = std::min(xmin, std::log10(p.rate_kbps));
      xmax = std::max(xmax, std::log10(p.rate_kbps));
      ymin = std::min(ymin, p.quality);
      ymax = std::max(ymax, p.quality);
    }
  }
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW
    << " " << kH << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
    << title << "</text>\n";
  if (!std::isfinite(xmin)) {
    s << "<text x=\"" << kW / 2 << "\" y=\"" << kH / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\">no data</text>\n</svg>\n";
    return s.str();
  }
  double lx0 = std::floor(xmin), lx1 = std::ceil(xmax);
  if (lx1 <= lx0) lx1 = lx0 + 1;
  if (ymax - ymin < 1e-9) ymin -= 0.5, ymax += 0.5;
  double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  double pw = kW - kL - kR, ph = kH - kT - kB;
  auto px = [&](double lr) { return kL + (lr - lx0) / (lx1 - lx0) * pw; };
  auto py = [&](double q) { return kT + (ymax - q) / (ymax - ymin) * ph; };

  s << "<rect x=\"" << kL << "\" y=\"" << kT << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (double d = lx0; d <= lx1 + 1e-9; d += 1.0) {
    for (int m = 1; m <= 9; ++m) {
      double lr = d + std::log10(static_cast<double>(m));
      if (lr > lx1 + 1e-9) break;
      double x = px(lr);
      s << "<line x1=\"" << x << "\" y1=\"" << kT + ph << "\" x2=\"" << x << "\" y2=\"" << kT + ph - (m == 1 ? 8 : 4)
        << "\" stroke=\"#444\"/>\n";
      if (m == 1) {
        s << "<text x=\"" << x << "\" y=\"" << kT + ph + 18
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(std::pow(10.0, d), 0)
          << "</text>\n";
      }
    }
  }
  for (int i = 0; i <= 5; ++i) {
    double q = ymin + (ymax - ymin) * i / 5.0;
    s << "<text x=\"" << kL - 6 << "\" y=\"" << py(q) + 4
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(q, 2) << "</text>\n";
  }
  s << "<text x=\"" << kL + pw / 2 << "\" y=\"" << kH - 10
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">rate (kbit/s, log scale)</text>\n";
  std::string ylabel = curves.empty() ? "quality" : curves.front().metric;
  s << "<text x=\"16\" y=\"" << kT + ph / 2 << "\" transform=\"rotate(-90 16 " << kT + ph / 2
    << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << ylabel << "</text>\n";

  std::size_t k = 0;
  for (const auto& c : curves) {
    const char* color = kColors[k % std::size(kColors)];
    auto pts = c.usable_points();
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : pts) s << px(std::log10(p.rate_kbps)) << "," << py(p.quality) << " ";
    s << "\"/>\n";
    for (const auto& p : pts)
      s << "<circle cx=\"" << px(std::log10(p.rate_kbps)) << "\" cy=\"" << py(p.quality) << "\" r=\"2.5\" fill=\""
        << color << "\"/>\n";
    double ly = kT + 16 + 18.0 * static_cast<double>(k);
    std::string label = is_conventional(c) ? "conventional" : c.upscaler;
    s << "<line x1=\"" << kW - kR + 12 << "\" y1=\"" << ly << "\" x2=\"" << kW - kR + 36 << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << kW - kR + 42 << "\" y=\"" << ly + 4 << "\" font-family=\"sans-serif\" font-size=\"12\">"
      << label << "</text>\n";
    ++k;
  }
  s << "</svg>\n";
  return s.str();
}

std::vector<std::string> write_plots(std::span<const RdCurve> curves, const std::string& out_dir) {
  fs::path dir = fs::path(out_dir) / "plots";
  fs::create_directories(dir);
  std::vector<std::pair<std::string, std::string>> groups;
  for (const auto& c : curves) {
    std::pair<std::string, std::string> g{c.sequence, c.metric};
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
  }
  std::vector<std::string> written;
  for (const auto& [seq, metric] : groups) {
    std::vector<RdCurve> sel;
    for (const auto& c : curves)
      if (c.sequence == seq && c.metric == metric) sel.push_back(c);
    fs::path file = dir / (seq + "_" + metric + ".svg");
    std::ofstream out(file, std::ios::binary);
    if (!out) fail(ErrorCode::kIo, "cannot write " + file.string());
    out << render_rd_svg(sel, seq + " " + metric);
    written.push_back(file.string());
  }
  return written;
}

// ---------------------------------------------------------------------------

ExperimentReport build_report(std::vector<RdCurve> curves, std::vector<CellFailure> failures, BdMode mode,
                              Provenance provenance) {
  ExperimentReport r;
  ParsedRdCsv parsed = parse_rd_csv(format_rd_csv(curves, failures));
  r.curves = std::move(parsed.curves);
  r.failures = std::move(failures);
  r.mode = mode;
  auto windows = default_qp_windows();
  r.bd_rows = compute_bd_table(r.curves, mode, windows);
  r.critical = compute_critical_rates(r.curves);
  r.provenance = std::move(provenance);
  std::set<std::string> cells;
  for (const auto& c : r.curves) {
    if (c.metric != kMetricPsnr) continue;
    for (const auto& p : c.points) cells.insert(c.sequence + "|" + p.branch + "|" + c.upscaler + "|" + std::to_string(p.qp));
  }
  for (const auto& f : r.failures) cells.insert(f.sequence + "|" + f.branch + "|" + f.upscaler + "|" + std::to_string(f.qp));
  r.present_cells = cells.size();
  r.expected_cells = r.present_cells;
  return r;
}

std::string ExperimentReport::rd_csv() const { return format_rd_csv(curves, failures); }

std::string ExperimentReport::bd_csv() const { return format_bd_csv(bd_rows, mode); }

std::string ExperimentReport::text() const {
  std::ostringstream s;
  s << "scalechain report\n=================\n\n";
  s << "Provenance\n----------\n";
  s << "  version            " << provenance.version << "\n";
  s << "  config hash        " << provenance.config_hash << "\n";
  s << "  codec invocations  " << provenance.codec_invocations << " (" << provenance.cache_hits
    << " served from disk cache)\n";
  s << "  vmaf               " << provenance.vmaf_status << "\n";
  for (const auto& [name, w] : provenance.weights) s << "  weights " << name << std::string(11 - std::min<std::size_t>(name.size(), 10), ' ') << w << "\n";
  s << "  wall time          " << fmt(provenance.wall_seconds, 2) << " s\n";
  s << "  note               backproj is an iterative back-projection stand-in, not L-SEABI\n";
  s << "  commands\n";
  for (const auto& c : provenance.commands) s << "    " << c << "\n";
  s << "\nCells: " << present_cells << " of " << expected_cells << " present or failure-marked, "
    << failures.size() << " failed\n";
  for (const auto& f : failures)
    s << "  FAILED " << f.sequence << " " << f.branch << " " << f.upscaler << " qp " << f.qp << ": " << f.error << "\n";

  s << "\nBD-rate savings in % vs conventional (positive = saving), mode " << to_string(mode) << "\n";
  s << "--------------------------------------------------------------------\n";
  std::size_t wseq = 8;
  for (const auto& r : bd_rows) wseq = std::max(wseq, r.sequence.size());
  char line[512];
  std::snprintf(line, sizeof line, "  %-*s  %-7s  %-8s  %-9s  %10s  %10s  %10s  %s\n", static_cast<int>(wseq),
                "sequence", "metric", "window", "upscaler", "bd_rate", "pchip", "poly3", "note");
  s << line;
  for (const auto& r : bd_rows) {
    std::string note = r.note;
    if (r.modes_disagree) note = note.empty() ? "modes disagree" : note + "; modes disagree";
    std::snprintf(line, sizeof line, "  %-*s  %-7s  %-8s  %-9s  %10s  %10s  %10s  %s\n", static_cast<int>(wseq),
                  r.sequence.c_str(), r.metric.c_str(), r.window.c_str(), r.upscaler.c_str(), fmt(r.value, 2).c_str(),
                  fmt(r.pchip, 2).c_str(), fmt(r.poly3, 2).c_str(), note.c_str());
    s << line;
  }

  s << "\nCritical bitrates (scaled chain falls below conventional)\n";
  s << "---------------------------------------------------------\n";
  for (const auto& c : critical) {
    std::snprintf(line, sizeof line, "  %-*s  %-7s  %-9s  %s\n", static_cast<int>(wseq), c.sequence.c_str(),
                  c.metric.c_str(), c.upscaler.c_str(),
                  c.kbps ? (fmt(*c.kbps, 1) + " kbit/s").c_str() : ("none (" + c.note + ")").c_str());
    s << line;
  }
  return s.str();
}

}  // namespace scalechain
