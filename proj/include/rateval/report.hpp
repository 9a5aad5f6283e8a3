#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "rateval/agreement.hpp"
#include "rateval/corpus.hpp"
#include "rateval/io.hpp"
#include "rateval/reduce.hpp"
#include "rateval/similarity.hpp"

namespace rateval::report {

using io::json;

// ---------------------------------------------------------------------------
// Number formatting

/// Fixed-point text with `places` decimals, ties rounded to even. Works from
/// the exact binary value, so only exactly representable ties are ties.
inline std::string format_fixed(double value, int places) {
  if (!std::isfinite(value)) return "--";
  char buf[128];
  auto res = std::to_chars(buf, buf + sizeof buf, std::abs(value), std::chars_format::fixed, 40);
  std::string digits(buf, res.ptr);
  const auto dot_pos = digits.find('.');
  std::string int_part = digits.substr(0, dot_pos);
  std::string frac = digits.substr(dot_pos + 1);
  std::string kept = int_part + frac.substr(0, static_cast<std::size_t>(places));
  const char next = frac[static_cast<std::size_t>(places)];
  const bool rest_nonzero =
      frac.find_first_not_of('0', static_cast<std::size_t>(places) + 1) != std::string::npos;
  bool round_up = next > '5' || (next == '5' && rest_nonzero) ||
                  (next == '5' && !rest_nonzero && ((kept.back() - '0') % 2 == 1));
  if (round_up) {
    int i = static_cast<int>(kept.size()) - 1;
    while (i >= 0 && kept[static_cast<std::size_t>(i)] == '9') kept[static_cast<std::size_t>(i--)] = '0';
    if (i < 0) {
      kept.insert(kept.begin(), '1');
    } else {
      ++kept[static_cast<std::size_t>(i)];
    }
  }
  std::string out = kept.substr(0, kept.size() - static_cast<std::size_t>(places));
  if (places > 0) out += "." + kept.substr(kept.size() - static_cast<std::size_t>(places));
  const bool zero = kept.find_first_not_of('0') == std::string::npos;
  if (value < 0.0 && !zero) out.insert(out.begin(), '-');
  return out;
}

inline constexpr const char* kUndefinedCell = "--";

inline std::string format_optional(const std::optional<double>& v, int places) {
  return v ? format_fixed(*v, places) : kUndefinedCell;
}

// ---------------------------------------------------------------------------
// Tables

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::string to_csv() const {
    auto field = [](const std::string& s) {
      if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
      std::string q = "\"";
      for (char c : s) {
        if (c == '"') q += '"';
        q += c;
      }
      return q + "\"";
    };
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += field(cells[i]);
      }
      out += '\n';
    };
    line(columns);
    for (const auto& r : rows) line(r);
    return out;
  }
};

inline std::string display_label(const RaterProfile& r) { return r.label.empty() ? r.rater_id : r.label; }

/// One row of the scoring-consistency table with the raw metric values.
struct ConsistencyRow {
  std::string rater_id;
  std::string label;
  std::optional<double> mean;
  std::optional<double> std_dev;
  std::size_t n = 0;
  /// Keyed by reference rater id; nullopt where the cell renders "--".
  std::map<std::string, std::optional<double>> nmi;
  std::map<std::string, std::optional<double>> qwk;
  std::map<std::string, std::size_t> paired_n;
};

struct ConsistencyTable {
  Table table;
  std::vector<ConsistencyRow> rows;
  std::vector<std::string> references;
  agreement::CategoryIndexing indexing = agreement::CategoryIndexing::full_scale;
  /// "rater vs reference: reason" for every undefined metric other than self cells.
  std::vector<std::string> undefined;

  json to_json() const {
    json j{{"name", table.name},
           {"indexing", agreement::to_string(indexing)},
           {"references", references},
           {"undefined", undefined},
           {"rows", json::array()}};
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    for (const auto& r : rows) {
      json row{{"rater_id", r.rater_id}, {"label", r.label}, {"n", r.n}, {"mean", opt(r.mean)},
               {"std_dev", opt(r.std_dev)}};
      for (const auto& ref : references) {
        row["nmi"][ref] = opt(r.nmi.at(ref));
        row["qwk"][ref] = opt(r.qwk.at(ref));
        row["paired_n"][ref] = r.paired_n.at(ref);
      }
      j["rows"].push_back(std::move(row));
    }
    return j;
  }
};

/// One row per rater (corpus order): Mean, Std. Dev., then NMI and QWK against
/// each reference rater. Self comparisons, empty pairings and undefined QWK
/// render as "--".
inline ConsistencyTable emit_consistency_table(const Corpus& corpus, const std::vector<std::string>& references,
                                               agreement::CategoryIndexing indexing =
                                                   agreement::CategoryIndexing::full_scale) {
  ConsistencyTable out;
  out.references = references;
  out.indexing = indexing;
  out.table.name = "consistency";
  out.table.columns = {"Model", "Mean", "Std. Dev."};
  for (const auto& ref : references) {
    out.table.columns.push_back("NMI (" + display_label(corpus.rater(ref)) + ")");
  }
  for (const auto& ref : references) {
    out.table.columns.push_back("QWK (" + display_label(corpus.rater(ref)) + ")");
  }

  for (const auto& rater : corpus.raters()) {
    ConsistencyRow row;
    row.rater_id = rater.rater_id;
    row.label = display_label(rater);
    std::vector<int> scores;
    for (const auto& id : corpus.sorted_essay_ids()) {
      if (const auto* r = corpus.find_rating(id, rater.rater_id)) scores.push_back(r->score);
    }
    row.n = scores.size();
    if (!scores.empty()) {
      auto s = summarize_scores(scores);
      row.mean = s.mean;
      row.std_dev = s.std_dev;
    }
    for (const auto& ref : references) {
      row.nmi[ref] = std::nullopt;
      row.qwk[ref] = std::nullopt;
      row.paired_n[ref] = 0;
      if (ref == rater.rater_id) continue;
      auto pairs = paired_scores(corpus, rater.rater_id, ref);
      row.paired_n[ref] = pairs.size();
      if (pairs.empty()) {
        out.undefined.push_back(rater.rater_id + " vs " + ref + ": no shared essays");
        continue;
      }
      row.nmi[ref] = agreement::nmi(pairs);
      try {
        row.qwk[ref] = agreement::qwk(pairs, corpus.scale(), indexing);
      } catch (const UndefinedMetric& e) {
        out.undefined.push_back(rater.rater_id + " vs " + ref + ": " + e.what());
      }
    }

    std::vector<std::string> cells{row.label, format_optional(row.mean, 2), format_optional(row.std_dev, 4)};
    for (const auto& ref : references) cells.push_back(format_optional(row.nmi[ref], 4));
    for (const auto& ref : references) cells.push_back(format_optional(row.qwk[ref], 4));
    out.table.rows.push_back(std::move(cells));
    out.rows.push_back(std::move(row));
  }
  return out;
}

/// Per-model summary for one absolute score difference.
struct ModelSummary {
  std::string rater_id;
  std::string label;
  similarity::SimilaritySummary summary;
};

struct SimilarityTable {
  int abs_score_diff = 0;
  Table table;
  std::vector<ModelSummary> rows;

  json to_json() const {
    json j{{"name", table.name}, {"abs_score_diff", abs_score_diff}, {"rows", json::array()}};
    for (const auto& r : rows) {
      j["rows"].push_back({{"rater_id", r.rater_id},
                           {"label", r.label},
                           {"max", r.summary.max},
                           {"min", r.summary.min},
                           {"mean", r.summary.mean},
                           {"std_dev", r.summary.std_dev ? json(*r.summary.std_dev) : json(nullptr)},
                           {"count", r.summary.count}});
    }
    return j;
  }
};

/// One table per requested difference with Model/Max/Min/Mean/Std. Dev./Count
/// columns. Models whose summary is empty at that difference are left out.
inline std::vector<SimilarityTable> emit_similarity_tables(const std::vector<ModelSummary>& summaries,
                                                           const std::vector<int>& diffs = {0, 1, 2}) {
  std::vector<SimilarityTable> out;
  for (int diff : diffs) {
    SimilarityTable t;
    t.abs_score_diff = diff;
    t.table.name = "similarity_diff" + std::to_string(diff);
    t.table.columns = {"Model", "Max", "Min", "Mean", "Std. Dev.", "Count"};
    for (const auto& s : summaries) {
      if (s.summary.abs_score_diff != diff || s.summary.empty()) continue;
      t.rows.push_back(s);
      t.table.rows.push_back({s.label, format_fixed(s.summary.max, 4), format_fixed(s.summary.min, 4),
                              format_fixed(s.summary.mean, 4), format_optional(s.summary.std_dev, 4),
                              std::to_string(s.summary.count)});
    }
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// SVG

struct Rgb {
  int r = 0, g = 0, b = 0;

  std::string hex() const {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string s = "#";
    for (int c : {r, g, b}) {
      s += kHex[(c >> 4) & 0xf];
      s += kHex[c & 0xf];
    }
    return s;
  }

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Piecewise-linear map from [-1, 1] to RGB through three anchors: red at -1,
/// near-white at 0 and dark blue at +1. Over [0, 1] every channel decreases,
/// so lightness falls monotonically with similarity.
struct ColorRamp {
  static constexpr Rgb kNegative{178, 24, 43};
  static constexpr Rgb kNeutral{247, 247, 247};
  static constexpr Rgb kPositive{8, 48, 107};

  static Rgb at(double value) {
    const double v = std::clamp(std::isfinite(value) ? value : 0.0, -1.0, 1.0);
    const Rgb& from = v < 0.0 ? kNegative : kNeutral;
    const Rgb& to = v < 0.0 ? kNeutral : kPositive;
    const double t = v < 0.0 ? v + 1.0 : v;
    auto mix = [t](int a, int b) { return static_cast<int>(std::lround(a + (b - a) * t)); };
    return {mix(from.r, to.r), mix(from.g, to.g), mix(from.b, to.b)};
  }
};

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

inline std::string px(double v) { return format_fixed(v, 2); }

/// Viewport and plot-area geometry of the PCA scatter. A data point (x, y)
/// lands at
///   px = kPlotLeft + (x - x_lo) / (x_hi - x_lo) * kPlotWidth
///   py = kPlotTop + kPlotHeight - (y - y_lo) / (y_hi - y_lo) * kPlotHeight
/// where [lo, hi] is the data range widened by 5% of its span on each side
/// (or by 1 on each side when the span is zero).
struct ScatterLayout {
  static constexpr double kWidth = 800;
  static constexpr double kHeight = 600;
  static constexpr double kPlotLeft = 70;
  static constexpr double kPlotTop = 50;
  static constexpr double kPlotWidth = 530;
  static constexpr double kPlotHeight = 490;
  static constexpr double kLegendLeft = 620;

  double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;

  static std::pair<double, double> padded(double lo, double hi) {
    const double span = hi - lo;
    if (span <= 0.0) return {lo - 1.0, hi + 1.0};
    return {lo - 0.05 * span, hi + 0.05 * span};
  }

  static ScatterLayout fit(const std::vector<reduce::ProjectedPoint>& points) {
    ScatterLayout l;
    double xmin = points.front().x, xmax = xmin, ymin = points.front().y, ymax = ymin;
    for (const auto& p : points) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y);
      ymax = std::max(ymax, p.y);
    }
    std::tie(l.x_lo, l.x_hi) = padded(xmin, xmax);
    std::tie(l.y_lo, l.y_hi) = padded(ymin, ymax);
    return l;
  }

  double map_x(double x) const { return kPlotLeft + (x - x_lo) / (x_hi - x_lo) * kPlotWidth; }
  double map_y(double y) const { return kPlotTop + kPlotHeight - (y - y_lo) / (y_hi - y_lo) * kPlotHeight; }
};

inline constexpr std::array<const char*, 10> kPalette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                         "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

enum class GlyphShape { circle, square, triangle_up, diamond, triangle_down, plus, cross, star };
inline constexpr int kShapeCount = 8;

inline std::string glyph(GlyphShape shape, double cx, double cy, const char* color, const std::string& attrs) {
  const double r = 6.0;
  auto pt = [](double x, double y) { return px(x) + "," + px(y); };
  switch (shape) {
    case GlyphShape::circle:
      return "<circle " + attrs + " cx=\"" + px(cx) + "\" cy=\"" + px(cy) + "\" r=\"" + px(r) + "\" fill=\"" +
             color + "\"/>";
    case GlyphShape::square:
      return "<rect " + attrs + " x=\"" + px(cx - r) + "\" y=\"" + px(cy - r) + "\" width=\"" + px(2 * r) +
             "\" height=\"" + px(2 * r) + "\" fill=\"" + color + "\"/>";
    case GlyphShape::triangle_up:
      return "<polygon " + attrs + " points=\"" + pt(cx, cy - r) + " " + pt(cx + r, cy + r) + " " +
             pt(cx - r, cy + r) + "\" fill=\"" + color + "\"/>";
    case GlyphShape::diamond:
      return "<polygon " + attrs + " points=\"" + pt(cx, cy - r) + " " + pt(cx + r, cy) + " " + pt(cx, cy + r) +
             " " + pt(cx - r, cy) + "\" fill=\"" + color + "\"/>";
    case GlyphShape::triangle_down:
      return "<polygon " + attrs + " points=\"" + pt(cx - r, cy - r) + " " + pt(cx + r, cy - r) + " " +
             pt(cx, cy + r) + "\" fill=\"" + color + "\"/>";
    case GlyphShape::plus:
      return "<path " + attrs + " d=\"M" + pt(cx - r, cy) + " H" + px(cx + r) + " M" + pt(cx, cy - r) + " V" +
             px(cy + r) + "\" stroke=\"" + color + "\" stroke-width=\"3\" fill=\"none\"/>";
    case GlyphShape::cross:
      return "<path " + attrs + " d=\"M" + pt(cx - r, cy - r) + " L" + pt(cx + r, cy + r) + " M" +
             pt(cx - r, cy + r) + " L" + pt(cx + r, cy - r) + "\" stroke=\"" + color +
             "\" stroke-width=\"3\" fill=\"none\"/>";
    case GlyphShape::star: {
      std::string pts;
      for (int i = 0; i < 10; ++i) {
        const double angle = -std::numbers::pi / 2 + i * std::numbers::pi / 5;
        const double rad = i % 2 == 0 ? r * 1.3 : r * 0.55;
        if (i) pts += ' ';
        pts += pt(cx + rad * std::cos(angle), cy + rad * std::sin(angle));
      }
      return "<polygon " + attrs + " points=\"" + pts + "\" fill=\"" + color + "\"/>";
    }
  }
  return {};
}

/// Rater id and display label, in the order that assigns glyph styles.
using Legend = std::vector<std::pair<std::string, std::string>>;

/// 800x600 scatter of one score level's projected rationales. Glyph style is
/// the legend position (colour cycles over 10, shape over 8). Points are drawn
/// sorted by rater then essay so the bytes are stable.
inline std::string render_pca_scatter(const std::vector<reduce::ProjectedPoint>& input, int score_level,
                                      Legend legend = {}) {
  if (input.size() < 2) throw AnalysisError("PCA scatter needs at least 2 points");
  auto points = input;
  std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) {
    return std::tie(a.rater_id, a.essay_id) < std::tie(b.rater_id, b.essay_id);
  });
  for (const auto& p : points) {
    auto has = std::any_of(legend.begin(), legend.end(), [&](const auto& e) { return e.first == p.rater_id; });
    if (!has) legend.emplace_back(p.rater_id, p.rater_id);
  }
  std::map<std::string, std::size_t> style;
  for (std::size_t i = 0; i < legend.size(); ++i) style.emplace(legend[i].first, i);

  const auto layout = ScatterLayout::fit(points);
  using L = ScatterLayout;
  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"600\" viewBox=\"0 0 800 600\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"800\" height=\"600\" fill=\"#ffffff\"/>\n";
  s += "<text x=\"400\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"18\">"
       "PCA of rationale embeddings, score " + std::to_string(score_level) + "</text>\n";
  s += "<rect x=\"" + px(L::kPlotLeft) + "\" y=\"" + px(L::kPlotTop) + "\" width=\"" + px(L::kPlotWidth) +
       "\" height=\"" + px(L::kPlotHeight) + "\" fill=\"none\" stroke=\"#333333\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = layout.x_lo + (layout.x_hi - layout.x_lo) * i / 4.0;
    const double fy = layout.y_lo + (layout.y_hi - layout.y_lo) * i / 4.0;
    const double tx = layout.map_x(fx), ty = layout.map_y(fy);
    s += "<line x1=\"" + px(tx) + "\" y1=\"" + px(L::kPlotTop + L::kPlotHeight) + "\" x2=\"" + px(tx) + "\" y2=\"" +
         px(L::kPlotTop + L::kPlotHeight + 5) + "\" stroke=\"#333333\"/>\n";
    s += "<text x=\"" + px(tx) + "\" y=\"" + px(L::kPlotTop + L::kPlotHeight + 18) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + format_fixed(fx, 2) + "</text>\n";
    s += "<line x1=\"" + px(L::kPlotLeft - 5) + "\" y1=\"" + px(ty) + "\" x2=\"" + px(L::kPlotLeft) + "\" y2=\"" +
         px(ty) + "\" stroke=\"#333333\"/>\n";
    s += "<text x=\"" + px(L::kPlotLeft - 8) + "\" y=\"" + px(ty + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + format_fixed(fy, 2) + "</text>\n";
  }
  s += "<text x=\"" + px(L::kPlotLeft + L::kPlotWidth / 2) +
       "\" y=\"585\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">PC1</text>\n";
  s += "<text x=\"18\" y=\"" + px(L::kPlotTop + L::kPlotHeight / 2) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 18 " +
       px(L::kPlotTop + L::kPlotHeight / 2) + ")\">PC2</text>\n";

  for (const auto& p : points) {
    const auto i = style.at(p.rater_id);
    const auto attrs = "class=\"glyph\" data-rater=\"" + xml_escape(p.rater_id) + "\" data-essay=\"" +
                       xml_escape(p.essay_id) + "\"";
    s += glyph(static_cast<GlyphShape>(i % kShapeCount), layout.map_x(p.x), layout.map_y(p.y),
               kPalette[i % kPalette.size()], attrs) +
         "\n";
  }

  std::size_t row = 0;
  for (std::size_t i = 0; i < legend.size(); ++i) {
    const bool present = std::any_of(points.begin(), points.end(), [&](const auto& p) {
      return p.rater_id == legend[i].first;
    });
    if (!present) continue;
    const double y = L::kPlotTop + 10 + 22.0 * static_cast<double>(row++);
    s += glyph(static_cast<GlyphShape>(i % kShapeCount), L::kLegendLeft + 8, y, kPalette[i % kPalette.size()],
               "class=\"legend-glyph\"") +
         "\n";
    s += "<text class=\"legend-entry\" x=\"" + px(L::kLegendLeft + 22) + "\" y=\"" + px(y + 4) +
         "\" font-family=\"sans-serif\" font-size=\"12\">" + xml_escape(legend[i].second) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

/// Square similarity grid, one ColorRamp cell per (row, column) with the
/// integer label centered in it; essay ids as tick labels.
inline std::string render_heatmap(const Matrix& cells, const std::vector<std::vector<int>>& labels,
                                  const std::vector<std::string>& essay_order, const std::string& title = {}) {
  const std::size_t n = cells.rows();
  if (cells.cols() != n) throw AnalysisError("heatmap matrix must be square");
  if (labels.size() != n || essay_order.size() != n) throw AnalysisError("heatmap labels/order shape mismatch");
  for (const auto& r : labels) {
    if (r.size() != n) throw AnalysisError("heatmap labels shape mismatch");
  }
  constexpr double kCell = 36, kLeft = 100, kTop = 110;
  const double width = kLeft + kCell * static_cast<double>(n) + 120;
  const double height = kTop + kCell * static_cast<double>(n) + 30;
  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + px(width) + "\" height=\"" + px(height) +
       "\" viewBox=\"0 0 " + px(width) + " " + px(height) + "\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + px(width) + "\" height=\"" + px(height) + "\" fill=\"#ffffff\"/>\n";
  if (!title.empty()) {
    s += "<text x=\"" + px(width / 2) +
         "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" + xml_escape(title) +
         "</text>\n";
  }
  for (std::size_t j = 0; j < n; ++j) {
    const double x = kLeft + kCell * (static_cast<double>(j) + 0.5);
    s += "<text class=\"col-tick\" x=\"" + px(x) + "\" y=\"" + px(kTop - 8) +
         "\" font-family=\"sans-serif\" font-size=\"11\" transform=\"rotate(-60 " + px(x) + " " + px(kTop - 8) +
         ")\">" + xml_escape(essay_order[j]) + "</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double y = kTop + kCell * (static_cast<double>(i) + 0.5);
    s += "<text class=\"row-tick\" x=\"" + px(kLeft - 8) + "\" y=\"" + px(y + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + xml_escape(essay_order[i]) +
         "</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double x = kLeft + kCell * static_cast<double>(j);
      const double y = kTop + kCell * static_cast<double>(i);
      const double v = cells(i, j);
      s += "<rect class=\"cell\" x=\"" + px(x) + "\" y=\"" + px(y) + "\" width=\"" + px(kCell) + "\" height=\"" +
           px(kCell) + "\" fill=\"" + ColorRamp::at(v).hex() + "\" data-cosine=\"" + format_fixed(v, 4) + "\"/>\n";
      s += "<text class=\"cell-label\" x=\"" + px(x + kCell / 2) + "\" y=\"" + px(y + kCell / 2 + 4) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" +
           (v > 0.5 ? "#ffffff" : "#000000") + "\">" + std::to_string(labels[i][j]) + "</text>\n";
    }
  }
  // Colour key at -1, 0 and +1.
  const double key_x = kLeft + kCell * static_cast<double>(n) + 30;
  int slot = 0;
  for (double v : {1.0, 0.0, -1.0}) {
    const double y = kTop + 24.0 * slot++;
    s += "<rect class=\"key\" x=\"" + px(key_x) + "\" y=\"" + px(y) + "\" width=\"18\" height=\"18\" fill=\"" +
         ColorRamp::at(v).hex() + "\" stroke=\"#333333\"/>\n";
    s += "<text x=\"" + px(key_x + 24) + "\" y=\"" + px(y + 13) + "\" font-family=\"sans-serif\" font-size=\"11\">" +
         format_fixed(v, 1) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

// ---------------------------------------------------------------------------
// Run manifest

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct ArtifactEntry {
  std::string path;
  std::string kind;
  std::string sha256;
};

struct StageStatus {
  std::string name;
  std::string status;  // ok | failed | skipped
  std::string error;
};

struct RunManifest {
  std::string run_id;
  std::string started_at;
  std::string finished_at;
  json config = json::object();
  std::vector<std::pair<std::string, std::string>> inputs;  // path, sha256
  std::vector<ArtifactEntry> artifacts;
  std::vector<StageStatus> stages;
  std::vector<std::string> undefined_metrics;
  json notes = json::object();
  bool complete = false;

  json to_json() const {
    json j{{"run_id", run_id},
           {"started_at", started_at},
           {"finished_at", finished_at},
           {"complete", complete},
           {"config", config},
           {"inputs", json::array()},
           {"artifacts", json::array()},
           {"stages", json::array()},
           {"undefined_metrics", undefined_metrics},
           {"notes", notes}};
    for (const auto& [path, digest] : inputs) j["inputs"].push_back({{"path", path}, {"sha256", digest}});
    for (const auto& a : artifacts) {
      j["artifacts"].push_back({{"path", a.path}, {"kind", a.kind}, {"sha256", a.sha256}});
    }
    for (const auto& s : stages) {
      json stage{{"name", s.name}, {"status", s.status}};
      if (!s.error.empty()) stage["error"] = s.error;
      j["stages"].push_back(std::move(stage));
    }
    return j;
  }
};

/// Writes artifacts atomically under a run directory and registers each one,
/// with its digest, in the manifest.
class ArtifactWriter {
 public:
  ArtifactWriter(std::filesystem::path root, RunManifest& manifest) : root_(std::move(root)), manifest_(manifest) {}

  const std::filesystem::path& root() const noexcept { return root_; }

  void write(const std::string& relative, const std::string& contents, const std::string& kind) {
    io::write_atomic(root_ / relative, contents);
    auto digest = io::sha256_hex(contents);
    for (auto& a : manifest_.artifacts) {
      if (a.path == relative) {
        a.sha256 = digest;
        a.kind = kind;
        return;
      }
    }
    manifest_.artifacts.push_back({relative, kind, std::move(digest)});
  }

  void write_manifest() const { io::write_atomic(root_ / "manifest.json", manifest_.to_json().dump(2) + "\n"); }

 private:
  std::filesystem::path root_;
  RunManifest& manifest_;
};

}  // namespace rateval::report
