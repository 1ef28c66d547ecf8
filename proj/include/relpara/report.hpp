#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "relpara/analysis.hpp"
#include "relpara/error.hpp"
#include "relpara/metrics.hpp"
#include "relpara/perturb.hpp"

namespace relpara::analysis {

struct Fidelity {
  std::string scorer;
  double mean = 0.0;
  std::size_t n = 0;
};

struct ReportBundle {
  metrics::MetricReport original;
  metrics::MetricReport perturbed;
  metrics::ChangeReport change;
  PositionHistogram original_hist;
  PositionHistogram perturbed_hist;
  perturb::ExclusionLog exclusions;
  std::string plan_mode;
  std::optional<Fidelity> fidelity;
};

// Six decimals everywhere; -0 prints as 0.
inline std::string fixed6(double v) {
  if (std::abs(v) < 5e-7) v = 0.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// JSON writer with sorted keys (nlohmann's default object map), two-space
// indent and fixed six-decimal floats, so equal bundles give equal bytes.
inline void write_fixed_json(const nlohmann::json& j, std::ostream& os, int indent = 0) {
  const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
  const std::string close(static_cast<std::size_t>(indent), ' ');
  switch (j.type()) {
    case nlohmann::json::value_t::number_float:
      os << fixed6(j.get<double>());
      break;
    case nlohmann::json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        break;
      }
      os << "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) os << ",\n";
        first = false;
        os << pad << nlohmann::json(it.key()).dump() << ": ";
        write_fixed_json(it.value(), os, indent + 2);
      }
      os << "\n" << close << "}";
      break;
    }
    case nlohmann::json::value_t::array: {
      if (j.empty()) {
        os << "[]";
        break;
      }
      os << "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) os << ",\n";
        os << pad;
        write_fixed_json(j[i], os, indent + 2);
      }
      os << "\n" << close << "]";
      break;
    }
    default:
      os << j.dump();
  }
}

inline std::string dump_fixed(const nlohmann::json& j) {
  std::ostringstream os;
  write_fixed_json(j, os);
  os << '\n';
  return os.str();
}

inline nlohmann::json opt(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json to_json(const metrics::MetricReport& r) {
  return {{"dataset", r.dataset},     {"backend", r.backend},     {"n_pairs", r.n_pairs},
          {"rouge1_f1", r.rouge1_f1}, {"rouge2_f1", r.rouge2_f1}, {"rougeL_f1", r.rougeL_f1},
          {"bertscore_f1", opt(r.bertscore_f1)}, {"geval", opt(r.geval)}};
}

inline metrics::MetricReport metric_report_from_json(const nlohmann::json& j) {
  metrics::MetricReport r;
  r.dataset = j.at("dataset").get<std::string>();
  r.backend = j.at("backend").get<std::string>();
  r.n_pairs = j.at("n_pairs").get<std::size_t>();
  r.rouge1_f1 = j.at("rouge1_f1").get<double>();
  r.rouge2_f1 = j.at("rouge2_f1").get<double>();
  r.rougeL_f1 = j.at("rougeL_f1").get<double>();
  if (j.contains("bertscore_f1") && !j["bertscore_f1"].is_null()) r.bertscore_f1 = j["bertscore_f1"].get<double>();
  if (j.contains("geval") && !j["geval"].is_null()) r.geval = j["geval"].get<double>();
  return r;
}

inline nlohmann::json to_json(const PositionHistogram& h) {
  return {{"bins", h.bins}, {"n_mapped", h.n_mapped}};
}

inline nlohmann::json to_json(const ReportBundle& b) {
  nlohmann::json change = nlohmann::json::object();
  for (const auto& c : b.change.changes) change[c.metric] = opt(c.change_pct);
  nlohmann::json fid = nullptr;
  if (b.fidelity) fid = {{"scorer", b.fidelity->scorer}, {"mean", b.fidelity->mean}, {"n", b.fidelity->n}};
  return {{"plan_mode", b.plan_mode},
          {"original", to_json(b.original)},
          {"perturbed", to_json(b.perturbed)},
          {"change_pct", change},
          {"histograms",
           {{"original", to_json(b.original_hist)},
            {"perturbed", to_json(b.perturbed_hist)},
            {"l1_divergence", histogram_divergence(b.original_hist, b.perturbed_hist)}}},
          {"exclusions", perturb::to_json(b.exclusions)},
          {"paraphrase_fidelity", fid}};
}

inline std::string metrics_csv(const ReportBundle& b) {
  std::string out = "metric,original,perturbed,change_pct\n";
  for (const auto& c : b.change.changes)
    out += c.metric + "," + fixed6(c.original) + "," + fixed6(c.perturbed) + "," +
           (c.change_pct ? fixed6(*c.change_pct) : std::string("NA")) + "\n";
  return out;
}

inline std::string histograms_csv(const ReportBundle& b) {
  std::string out = "bin,lower,upper,original,perturbed\n";
  const auto n = b.original_hist.bins.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double lo = static_cast<double>(i) / static_cast<double>(n);
    const double hi = static_cast<double>(i + 1) / static_cast<double>(n);
    out += std::to_string(i) + "," + fixed6(lo) + "," + fixed6(hi) + "," + fixed6(b.original_hist.bins[i]) +
           "," + fixed6(b.perturbed_hist.bins[i]) + "\n";
  }
  return out;
}

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// Paired bar chart: one group per label, original (grey) then perturbed (blue).
inline std::string paired_bar_svg(const std::string& title, const std::vector<std::string>& labels,
                                  const std::vector<double>& a, const std::vector<double>& b) {
  const double group_w = 60.0, bar_w = 22.0, left = 50.0, top = 40.0, plot_h = 200.0;
  const double width = left + group_w * static_cast<double>(labels.size()) + 20.0;
  const double height = top + plot_h + 60.0;
  double vmax = 0.0;
  for (double v : a) vmax = std::max(vmax, v);
  for (double v : b) vmax = std::max(vmax, v);
  if (vmax <= 0.0) vmax = 1.0;

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
    << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  s << "<text x=\"" << num(left) << "\" y=\"20\" font-size=\"13\">" << xml_escape(title) << "</text>\n";
  s << "<line x1=\"" << num(left) << "\" y1=\"" << num(top + plot_h) << "\" x2=\"" << num(width - 10.0)
    << "\" y2=\"" << num(top + plot_h) << "\" stroke=\"black\"/>\n";
  s << "<text x=\"5\" y=\"" << num(top + 4.0) << "\">" << fixed6(vmax) << "</text>\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double x0 = left + group_w * static_cast<double>(i) + 6.0;
    const double ha = plot_h * a[i] / vmax, hb = plot_h * b[i] / vmax;
    s << "<rect x=\"" << num(x0) << "\" y=\"" << num(top + plot_h - ha) << "\" width=\"" << num(bar_w)
      << "\" height=\"" << num(ha) << "\" fill=\"#999999\"><title>original " << fixed6(a[i])
      << "</title></rect>\n";
    s << "<rect x=\"" << num(x0 + bar_w) << "\" y=\"" << num(top + plot_h - hb) << "\" width=\""
      << num(bar_w) << "\" height=\"" << num(hb) << "\" fill=\"#3366cc\"><title>perturbed "
      << fixed6(b[i]) << "</title></rect>\n";
    s << "<text x=\"" << num(x0) << "\" y=\"" << num(top + plot_h + 14.0) << "\">" << xml_escape(labels[i])
      << "</text>\n";
  }
  const double ly = top + plot_h + 34.0;
  s << "<rect x=\"" << num(left) << "\" y=\"" << num(ly) << "\" width=\"10\" height=\"10\" fill=\"#999999\"/>"
    << "<text x=\"" << num(left + 14.0) << "\" y=\"" << num(ly + 9.0) << "\">original</text>\n";
  s << "<rect x=\"" << num(left + 80.0) << "\" y=\"" << num(ly)
    << "\" width=\"10\" height=\"10\" fill=\"#3366cc\"/>"
    << "<text x=\"" << num(left + 94.0) << "\" y=\"" << num(ly + 9.0) << "\">perturbed</text>\n";
  s << "</svg>\n";
  return s.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << content;
  if (!out) throw Error("failed writing " + p.string());
}

}  // namespace detail

inline std::string metrics_svg(const ReportBundle& b) {
  std::vector<std::string> labels;
  std::vector<double> a, p;
  for (const auto& c : b.change.changes) {
    labels.push_back(c.metric);
    a.push_back(c.original);
    p.push_back(c.perturbed);
  }
  return detail::paired_bar_svg("Metric means: original vs perturbed", labels, a, p);
}

inline std::string histograms_svg(const ReportBundle& b) {
  std::vector<std::string> labels;
  const auto n = b.original_hist.bins.size();
  for (std::size_t i = 0; i < n; ++i) labels.push_back(fixed6(static_cast<double>(i) / static_cast<double>(n)).substr(0, 4));
  return detail::paired_bar_svg("Source position of summary sentences", labels, b.original_hist.bins,
                                b.perturbed_hist.bins);
}

// Writes report.json, metrics.csv, histograms.csv, metrics.svg and
// histograms.svg into out_dir and returns their paths in that order.
inline std::vector<std::filesystem::path> emit_report(const ReportBundle& bundle,
                                                      const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error("cannot create " + out_dir.string() + ": " + ec.message());
  const std::vector<std::pair<std::string, std::string>> files = {
      {"report.json", dump_fixed(to_json(bundle))},
      {"metrics.csv", metrics_csv(bundle)},
      {"histograms.csv", histograms_csv(bundle)},
      {"metrics.svg", metrics_svg(bundle)},
      {"histograms.svg", histograms_svg(bundle)}};
  std::vector<std::filesystem::path> manifest;
  for (const auto& [name, content] : files) {
    detail::write_file(out_dir / name, content);
    manifest.push_back(out_dir / name);
  }
  return manifest;
}

}  // namespace relpara::analysis
