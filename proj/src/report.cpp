#include "subln/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "subln/io.hpp"

namespace subln::report {

namespace {

constexpr double kWidth = 640, kHeight = 400, kLeft = 70, kRight = 170, kTop = 30, kBottom = 50;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::vector<lab::Arm> arms_of(const lab::SweepResult& result) {
  std::vector<lab::Arm> arms;
  for (const auto& c : result.cells) {
    const bool seen = std::any_of(arms.begin(), arms.end(), [&](const lab::Arm& a) {
      return a.variant == c.arm.variant && a.init == c.arm.init;
    });
    if (!seen) arms.push_back(c.arm);
  }
  return arms;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string depth_sweep_svg(const lab::SweepResult& result) {
  double lx_min = INFINITY, lx_max = -INFINITY, y_max = 0.0;
  for (const auto& c : result.cells) {
    lx_min = std::min(lx_min, std::log2(static_cast<double>(c.L)));
    lx_max = std::max(lx_max, std::log2(static_cast<double>(c.L)));
    if (std::isfinite(c.mean_delta_f)) y_max = std::max(y_max, c.mean_delta_f);
  }
  if (!(lx_max > lx_min)) lx_max = lx_min + 1.0;
  if (!(y_max > 0.0)) y_max = 1.0;
  y_max *= 1.1;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double L) { return kLeft + (std::log2(L) - lx_min) / (lx_max - lx_min) * pw; };
  auto py = [&](double y) { return kTop + ph - y / y_max * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\"" << kTop + ph
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + ph
      << "\" stroke=\"black\"/>\n";
  for (int e = static_cast<int>(std::ceil(lx_min)); e <= static_cast<int>(std::floor(lx_max)); ++e) {
    const double x = px(std::exp2(e));
    svg << "<text x=\"" << fixed(x, 1) << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">"
        << static_cast<long>(std::exp2(e)) << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double y = y_max * i / 4.0;
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << fixed(py(y) + 4, 1) << "\" text-anchor=\"end\">"
        << fixed(y, 4) << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\">L (sub-layers)</text>\n";
  svg << "<text x=\"16\" y=\"" << kTop + ph / 2 << "\" transform=\"rotate(-90 16 " << kTop + ph / 2
      << ")\" text-anchor=\"middle\">mean delta F</text>\n";

  const auto arms = arms_of(result);
  for (std::size_t a = 0; a < arms.size(); ++a) {
    const char* color = kColors[a % std::size(kColors)];
    std::ostringstream points;
    for (const auto* c : result.cells_for(arms[a])) {
      if (!std::isfinite(c->mean_delta_f)) continue;
      points << fixed(px(static_cast<double>(c->L)), 2) << ',' << fixed(py(c->mean_delta_f), 2) << ' ';
    }
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << points.str()
        << "\"/>\n";
    const double ly = kTop + 14 + 18 * static_cast<double>(a);
    svg << "<line x1=\"" << kLeft + pw + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << kLeft + pw + 32 << "\" y2=\""
        << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << kLeft + pw + 38 << "\" y=\"" << ly << "\">" << lab::arm_label(arms[a]) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string depth_sweep_summary(const lab::SweepResult& result) {
  std::ostringstream out;
  for (const auto& arm : arms_of(result)) {
    out << lab::arm_label(arm) << '\n';
    for (const auto* c : result.cells_for(arm)) {
      out << "  L=" << c->L << " mean=" << io::format_double(c->mean_delta_f)
          << " std=" << io::format_double(c->std_delta_f) << " diverged=" << c->n_diverged
          << " bound=" << io::format_double(c->bound) << '\n';
    }
  }
  return out.str();
}

}  // namespace subln::report
