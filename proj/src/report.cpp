#include "geoclr/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "geoclr/common.hpp"

namespace geoclr {

namespace {

constexpr double kWidth = 640.0, kHeight = 640.0, kMargin = 48.0;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  f << text;
  if (!f) throw DataError("write failed: " + path);
}

std::string f2(double v) { return format_double(v, 2); }

struct Range {
  double lo = 0.0, hi = 1.0;
  void fit(double v, bool first) {
    if (first) lo = hi = v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double span() const { return hi > lo ? hi - lo : 1.0; }
};

std::string svg_open(double w, double h) {
  return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
         f2(w) + "\" height=\"" + f2(h) + "\" viewBox=\"0 0 " + f2(w) + " " + f2(h) + "\">\n" +
         "<rect x=\"0\" y=\"0\" width=\"" + f2(w) + "\" height=\"" + f2(h) + "\" fill=\"white\"/>\n";
}

std::string axes(const std::string& xlabel, const std::string& ylabel, const Range& x, const Range& y) {
  std::ostringstream s;
  const double x0 = kMargin, x1 = kWidth - kMargin, y0 = kHeight - kMargin, y1 = kMargin;
  s << "<g stroke=\"black\" stroke-width=\"1\">\n"
    << "<line x1=\"" << f2(x0) << "\" y1=\"" << f2(y0) << "\" x2=\"" << f2(x1) << "\" y2=\"" << f2(y0) << "\"/>\n"
    << "<line x1=\"" << f2(x0) << "\" y1=\"" << f2(y0) << "\" x2=\"" << f2(x0) << "\" y2=\"" << f2(y1) << "\"/>\n"
    << "</g>\n<g font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<text x=\"" << f2(0.5 * (x0 + x1)) << "\" y=\"" << f2(kHeight - 12) << "\" text-anchor=\"middle\">" << xlabel
    << "</text>\n"
    << "<text x=\"14\" y=\"" << f2(0.5 * (y0 + y1)) << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
    << f2(0.5 * (y0 + y1)) << ")\">" << ylabel << "</text>\n"
    << "<text x=\"" << f2(x0) << "\" y=\"" << f2(y0 + 16) << "\" text-anchor=\"start\">" << f2(x.lo) << "</text>\n"
    << "<text x=\"" << f2(x1) << "\" y=\"" << f2(y0 + 16) << "\" text-anchor=\"end\">" << f2(x.hi) << "</text>\n"
    << "<text x=\"" << f2(x0 - 4) << "\" y=\"" << f2(y0) << "\" text-anchor=\"end\">" << f2(y.lo) << "</text>\n"
    << "<text x=\"" << f2(x0 - 4) << "\" y=\"" << f2(y1 + 10) << "\" text-anchor=\"end\">" << f2(y.hi) << "</text>\n"
    << "</g>\n";
  return s.str();
}

double to_px(double v, const Range& r, double a, double b) { return a + (v - r.lo) / r.span() * (b - a); }

const std::string& colour(int label) {
  const auto& p = class_palette();
  return p[static_cast<std::size_t>(label) % p.size()];
}

}  // namespace

const std::vector<double>& ProportionTable::row(int dive) const {
  const auto it = std::lower_bound(dives.begin(), dives.end(), dive);
  if (it == dives.end() || *it != dive) throw DataError("no proportions for dive " + std::to_string(dive));
  return fractions[static_cast<std::size_t>(it - dives.begin())];
}

ProportionTable class_proportions(const std::map<ImageId, int>& labels, const Dataset& dataset, int class_count) {
  if (class_count < 1) throw UsageError("class_proportions: class count must be >= 1");
  std::map<int, std::vector<std::size_t>> tally;
  for (const auto& [id, label] : labels) {
    if (label < 0 || label >= class_count) throw DataError("class_proportions: label out of range for id " + std::to_string(id));
    const GeorefImage* img = nullptr;
    try {
      img = &dataset.by_id(id);
    } catch (const DataError&) {
      throw DataError("class_proportions: no dive recorded for id " + std::to_string(id));
    }
    auto& row = tally[img->dive];
    row.resize(static_cast<std::size_t>(class_count), 0);
    ++row[static_cast<std::size_t>(label)];
  }
  ProportionTable t;
  t.class_count = class_count;
  for (const auto& [dive, row] : tally) {
    std::size_t n = 0;
    for (std::size_t c : row) n += c;
    std::vector<double> f(row.size());
    for (std::size_t c = 0; c < row.size(); ++c) f[c] = static_cast<double>(row[c]) / static_cast<double>(n);
    t.dives.push_back(dive);
    t.counts.push_back(n);
    t.fractions.push_back(std::move(f));
  }
  return t;
}

ProportionTable true_proportions(const Dataset& dataset) {
  std::map<ImageId, int> truth;
  for (const auto& img : dataset.images)
    if (img.label) truth[img.id] = *img.label;
  return class_proportions(truth, dataset, static_cast<int>(dataset.class_names.size()));
}

std::vector<double> proportion_l1(const ProportionTable& estimate, const ProportionTable& truth) {
  if (estimate.class_count != truth.class_count) throw UsageError("proportion_l1: class counts differ");
  std::vector<double> out;
  for (std::size_t k = 0; k < estimate.dives.size(); ++k) {
    const auto& t = truth.row(estimate.dives[k]);
    double d = 0.0;
    for (std::size_t c = 0; c < t.size(); ++c) d += std::abs(estimate.fractions[k][c] - t[c]);
    out.push_back(d);
  }
  return out;
}

void write_proportions(const std::string& path, const ProportionTable& table,
                       const std::vector<std::string>& class_names) {
  std::ostringstream s;
  s << "dive,images";
  for (int c = 0; c < table.class_count; ++c)
    s << ',' << (static_cast<std::size_t>(c) < class_names.size() ? class_names[static_cast<std::size_t>(c)] : "class" + std::to_string(c));
  s << '\n';
  for (std::size_t k = 0; k < table.dives.size(); ++k) {
    s << table.dives[k] << ',' << table.counts[k];
    for (double f : table.fractions[k]) s << ',' << format_double(f, 6);
    s << '\n';
  }
  write_text(path, s.str());
}

const std::vector<std::string>& class_palette() {
  static const std::vector<std::string> palette = {"#e6c229", "#2e8b57", "#7f7f7f", "#d1495b",
                                                   "#1f77b4", "#9467bd", "#ff7f0e", "#17becf"};
  return palette;
}

std::string map_svg(const std::map<ImageId, int>& predictions, const Dataset& dataset) {
  Range e, n;
  bool first = true;
  for (const auto& img : dataset.images)
    if (predictions.count(img.id)) {
      e.fit(img.georef.easting, first);
      n.fit(img.georef.northing, first);
      first = false;
    }
  std::ostringstream s;
  s << svg_open(kWidth, kHeight) << axes("easting (m)", "northing (m)", e, n) << "<g stroke=\"none\">\n";
  for (const auto& img : dataset.images) {
    const auto it = predictions.find(img.id);
    if (it == predictions.end()) continue;
    s << "<circle cx=\"" << f2(to_px(img.georef.easting, e, kMargin, kWidth - kMargin)) << "\" cy=\""
      << f2(to_px(img.georef.northing, n, kHeight - kMargin, kMargin)) << "\" r=\"2\" fill=\"" << colour(it->second)
      << "\"/>\n";
  }
  s << "</g>\n</svg>\n";
  return s.str();
}

std::string depth_profile_svg(const std::map<ImageId, int>& predictions, const Dataset& dataset) {
  std::vector<const GeorefImage*> shown;
  for (const auto& img : dataset.images)
    if (predictions.count(img.id)) shown.push_back(&img);
  Range x, d;
  x.lo = 0.0;
  x.hi = shown.empty() ? 1.0 : static_cast<double>(shown.size() - 1);
  for (std::size_t i = 0; i < shown.size(); ++i) d.fit(shown[i]->georef.depth, i == 0);
  std::ostringstream s;
  s << svg_open(kWidth, kHeight) << axes("image index", "depth (m)", x, d) << "<g stroke-width=\"1.5\">\n";
  for (std::size_t i = 0; i + 1 < shown.size(); ++i) {
    if (shown[i]->dive != shown[i + 1]->dive) continue;
    // Depth grows downwards on the page.
    s << "<line x1=\"" << f2(to_px(static_cast<double>(i), x, kMargin, kWidth - kMargin)) << "\" y1=\""
      << f2(to_px(shown[i]->georef.depth, d, kMargin, kHeight - kMargin)) << "\" x2=\""
      << f2(to_px(static_cast<double>(i + 1), x, kMargin, kWidth - kMargin)) << "\" y2=\""
      << f2(to_px(shown[i + 1]->georef.depth, d, kMargin, kHeight - kMargin)) << "\" stroke=\""
      << colour(predictions.at(shown[i]->id)) << "\"/>\n";
  }
  s << "</g>\n</svg>\n";
  return s.str();
}

std::string map_csv(const std::map<ImageId, int>& predictions, const Dataset& dataset) {
  std::ostringstream s;
  s << "id,easting,northing,depth,dive,predicted,truth\n";
  auto name = [&](int c) {
    return static_cast<std::size_t>(c) < dataset.class_names.size() ? dataset.class_names[static_cast<std::size_t>(c)]
                                                                     : std::to_string(c);
  };
  for (const auto& img : dataset.images) {
    const auto it = predictions.find(img.id);
    if (it == predictions.end()) continue;
    s << img.id << ',' << format_double(img.georef.easting, 3) << ',' << format_double(img.georef.northing, 3) << ','
      << format_double(img.georef.depth, 3) << ',' << img.dive << ',' << name(it->second) << ','
      << (img.label ? name(*img.label) : "") << '\n';
  }
  return s.str();
}

void habitat_map(const std::map<ImageId, int>& predictions, const Dataset& dataset, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir + ": " + ec.message());
  const std::filesystem::path base(dir);
  write_text((base / "map.svg").string(), map_svg(predictions, dataset));
  write_text((base / "depth_profile.svg").string(), depth_profile_svg(predictions, dataset));
  write_text((base / "map.csv").string(), map_csv(predictions, dataset));
}

std::size_t DepthHistogram::total() const {
  std::size_t n = 0;
  for (const auto& row : counts)
    for (std::size_t c : row) n += c;
  return n;
}

DepthHistogram class_depth_histogram(const std::map<ImageId, int>& predictions, const Dataset& dataset,
                                     int class_count, double bin_width) {
  if (!(bin_width > 0.0)) throw UsageError("depth histogram: bin width must be > 0");
  DepthHistogram h;
  h.bin_width = bin_width;
  h.counts.assign(static_cast<std::size_t>(class_count), {});
  bool first = true;
  double lo = 0.0;
  for (const auto& [id, label] : predictions) {
    const double d = dataset.by_id(id).georef.depth;
    lo = first ? d : std::min(lo, d);
    first = false;
  }
  h.origin = std::floor(lo / bin_width) * bin_width;
  for (const auto& [id, label] : predictions) {
    if (label < 0 || label >= class_count) throw DataError("depth histogram: label out of range for id " + std::to_string(id));
    const auto bin = static_cast<std::size_t>(std::floor((dataset.by_id(id).georef.depth - h.origin) / bin_width));
    auto& row = h.counts[static_cast<std::size_t>(label)];
    if (row.size() <= bin) {
      for (auto& r : h.counts) r.resize(std::max(r.size(), bin + 1), 0);
    }
    ++row[bin];
  }
  return h;
}

void write_depth_histogram(const std::string& path, const DepthHistogram& hist,
                           const std::vector<std::string>& class_names) {
  std::ostringstream s;
  s << "class,depth_lo,depth_hi,count\n";
  for (std::size_t c = 0; c < hist.counts.size(); ++c)
    for (std::size_t b = 0; b < hist.counts[c].size(); ++b)
      s << (c < class_names.size() ? class_names[c] : std::to_string(c)) << ','
        << format_double(hist.origin + b * hist.bin_width, 3) << ','
        << format_double(hist.origin + (b + 1) * hist.bin_width, 3) << ',' << hist.counts[c][b] << '\n';
  write_text(path, s.str());
}

}  // namespace geoclr
