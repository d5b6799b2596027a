#include "rootseg/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "rootseg/error.hpp"

namespace rootseg {

namespace {

// Boundary between two parabolas of the lower envelope, as an exact fraction
// num/den (den > 0). Infinite ends are flagged.
struct Boundary {
  std::int64_t num = 0;
  std::int64_t den = 1;
  int inf = 0;  // -1: -infinity, +1: +infinity
};

// Only called on finite boundaries.
bool less_equal(const Boundary& a, const Boundary& b) {
  return static_cast<__int128>(a.num) * b.den <= static_cast<__int128>(b.num) * a.den;
}

bool less_than_int(const Boundary& a, std::int64_t q) {
  if (a.inf) return a.inf < 0;
  return a.num < q * a.den;
}

// One separable pass over a line of n samples spaced `stride` apart.
// f holds squared distances along previous axes (kInfinity where unknown).
void edt_line(std::int64_t* data, std::int64_t n, std::int64_t stride, std::vector<std::int64_t>& f,
              std::vector<std::int64_t>& v, std::vector<Boundary>& z) {
  constexpr std::int64_t kInf = DistanceField::kInfinity;
  f.resize(n);
  for (std::int64_t i = 0; i < n; ++i) f[i] = data[i * stride];
  v.resize(n);
  z.resize(n + 1);

  std::int64_t k = -1;
  for (std::int64_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = {0, 1, -1};
      z[1] = {0, 1, 1};
      continue;
    }
    Boundary s;
    while (true) {
      const std::int64_t p = v[k];
      s = {(f[q] + q * q) - (f[p] + p * p), 2 * (q - p), 0};
      if (k > 0 && less_equal(s, z[k])) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = {0, 1, 1};
  }
  if (k < 0) return;  // no features on this line: leave kInfinity

  k = 0;
  for (std::int64_t q = 0; q < n; ++q) {
    while (less_than_int(z[k + 1], q)) ++k;
    const std::int64_t dq = q - v[k];
    data[q * stride] = dq * dq + f[v[k]];
  }
}

}  // namespace

DistanceField edt_squared(const Volume& mask) {
  const auto& dims = mask.dims();
  if (dims.c != 1) throw Error(ErrorCode::kShape, "edt: mask must have one channel");
  DistanceField field;
  field.dims = dims.spatial();
  const std::int64_t d = dims.d, h = dims.h, w = dims.w;
  field.squared.assign(static_cast<std::size_t>(mask.size()), DistanceField::kInfinity);
  for (std::int64_t i = 0; i < mask.size(); ++i) {
    if (mask.value(i) != 0.0) field.squared[i] = 0;
  }

  std::vector<std::int64_t> f, v;
  std::vector<Boundary> z;
  std::int64_t* data = field.squared.data();
  for (std::int64_t a = 0; a < d; ++a)
    for (std::int64_t b = 0; b < h; ++b) edt_line(data + (a * h + b) * w, w, 1, f, v, z);
  for (std::int64_t a = 0; a < d; ++a)
    for (std::int64_t c = 0; c < w; ++c) edt_line(data + a * h * w + c, h, w, f, v, z);
  for (std::int64_t b = 0; b < h; ++b)
    for (std::int64_t c = 0; c < w; ++c) edt_line(data + b * w + c, d, h * w, f, v, z);
  return field;
}

bool within_tolerance(std::int64_t sq, double d) {
  if (sq == DistanceField::kInfinity) return false;
  if (d == std::floor(d) && d < 3.0e9) {
    const auto di = static_cast<std::int64_t>(d);
    return sq <= di * di;
  }
  return static_cast<double>(sq) <= d * d;
}

void finalize_row(ToleranceRow& row) {
  if (row.pred_count == 0 && row.gt_count == 0) {
    row.precision = row.recall = row.f1 = 1.0;
    return;
  }
  if (row.pred_count == 0 || row.gt_count == 0) {
    row.precision = row.recall = row.f1 = 0.0;
    return;
  }
  row.precision = static_cast<double>(row.matched_pred) / static_cast<double>(row.pred_count);
  row.recall = static_cast<double>(row.matched_gt) / static_cast<double>(row.gt_count);
  const double sum = row.precision + row.recall;
  row.f1 = sum > 0 ? 2.0 * row.precision * row.recall / sum : 0.0;
}

namespace {

struct CleanMasks {
  Volume pred;
  Volume gt;
};

Volume binarize(const Volume& v, const Volume* dontcare) {
  Volume out = Volume::zeros_u8(v.dims());
  auto o = out.u8();
  for (std::int64_t i = 0; i < v.size(); ++i) {
    const bool excluded = dontcare != nullptr && dontcare->value(i) != 0.0;
    o[i] = (!excluded && v.value(i) != 0.0) ? 1 : 0;
  }
  return out;
}

CleanMasks clean(const Volume& pred, const Volume& gt, const Volume* dontcare) {
  if (!(pred.dims() == gt.dims())) throw Error(ErrorCode::kShape, "metrics: prediction and ground truth dims differ");
  if (pred.dims().c != 1) throw Error(ErrorCode::kShape, "metrics: masks must have one channel");
  if (dontcare != nullptr && !(dontcare->dims() == gt.dims())) {
    throw Error(ErrorCode::kShape, "metrics: don't-care mask dims differ");
  }
  return {binarize(pred, dontcare), binarize(gt, dontcare)};
}

void check_tolerance(double d) {
  if (!(d >= 0.0) || !std::isfinite(d)) throw Error(ErrorCode::kInvalidArgument, "metrics: tolerance must be >= 0");
}

}  // namespace

ToleranceReport distance_tolerant_prf(const Volume& pred, const Volume& gt, std::span<const double> tolerances,
                                      const Volume* dontcare) {
  const CleanMasks m = clean(pred, gt, dontcare);
  const DistanceField to_gt = edt_squared(m.gt);
  const DistanceField to_pred = edt_squared(m.pred);
  const auto p = m.pred.u8();
  const auto g = m.gt.u8();

  ToleranceReport report;
  report.dontcare_removed = dontcare != nullptr;
  for (double d : tolerances) {
    check_tolerance(d);
    ToleranceRow row;
    row.tolerance = d;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i]) {
        ++row.pred_count;
        if (within_tolerance(to_gt.squared[i], d)) ++row.matched_pred;
      }
      if (g[i]) {
        ++row.gt_count;
        if (within_tolerance(to_pred.squared[i], d)) ++row.matched_gt;
      }
    }
    finalize_row(row);
    report.rows.push_back(row);
  }
  return report;
}

ToleranceReport micro_average(std::span<const ToleranceReport> reports) {
  ToleranceReport out;
  if (reports.empty()) return out;
  out.rows = reports[0].rows;
  out.dontcare_removed = reports[0].dontcare_removed;
  for (auto& row : out.rows) row.pred_count = row.gt_count = row.matched_pred = row.matched_gt = 0;
  for (const auto& r : reports) {
    if (r.rows.size() != out.rows.size()) throw Error(ErrorCode::kInvalidArgument, "micro_average: tolerance lists differ");
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
      if (r.rows[i].tolerance != out.rows[i].tolerance) {
        throw Error(ErrorCode::kInvalidArgument, "micro_average: tolerance lists differ");
      }
      out.rows[i].pred_count += r.rows[i].pred_count;
      out.rows[i].gt_count += r.rows[i].gt_count;
      out.rows[i].matched_pred += r.rows[i].matched_pred;
      out.rows[i].matched_gt += r.rows[i].matched_gt;
    }
  }
  for (auto& row : out.rows) finalize_row(row);
  return out;
}

std::string report_csv(const ToleranceReport& report) {
  std::string out = "tolerance,precision,recall,f1,pred_count,gt_count\n";
  char line[256];
  for (const auto& r : report.rows) {
    std::snprintf(line, sizeof line, "%.6f,%.6f,%.6f,%.6f,%lld,%lld\n", r.tolerance, r.precision, r.recall, r.f1,
                  static_cast<long long>(r.pred_count), static_cast<long long>(r.gt_count));
    out += line;
  }
  return out;
}

void write_report_csv(const ToleranceReport& report, const std::filesystem::path& path) {
  const std::string csv = report_csv(report);
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()));
}

Volume confusion_map(const Volume& pred, const Volume& gt, double tolerance, const Volume* dontcare) {
  check_tolerance(tolerance);
  const CleanMasks m = clean(pred, gt, dontcare);
  const DistanceField to_gt = edt_squared(m.gt);
  const DistanceField to_pred = edt_squared(m.pred);
  const auto p = m.pred.u8();
  const auto g = m.gt.u8();
  Volume out = Volume::zeros_u8(gt.dims());
  auto o = out.u8();
  for (std::size_t i = 0; i < o.size(); ++i) {
    Confusion c = Confusion::kBackground;
    if (p[i]) {
      c = within_tolerance(to_gt.squared[i], tolerance) ? Confusion::kTruePositive : Confusion::kFalsePositive;
    } else if (g[i] && !within_tolerance(to_pred.squared[i], tolerance)) {
      c = Confusion::kFalseNegative;
    }
    o[i] = static_cast<std::uint8_t>(c);
  }
  return out;
}

std::vector<std::filesystem::path> export_confusion_slices(const Volume& confusion, Axis axis,
                                                           const std::filesystem::path& out_dir) {
  const auto& dims = confusion.dims();
  if (dims.c != 1) throw Error(ErrorCode::kShape, "confusion volume must have one channel");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create '" + out_dir.string() + "'");

  static constexpr std::uint8_t kColors[4][3] = {{0, 0, 0}, {0, 255, 0}, {255, 0, 0}, {0, 0, 255}};
  const Extent3 sp = dims.spatial();
  const int a = static_cast<int>(axis);
  const std::int64_t rows = a == 0 ? sp.h : sp.d;
  const std::int64_t cols = a == 2 ? sp.h : sp.w;
  std::vector<std::filesystem::path> written;
  for (std::int64_t s = 0; s < sp[a]; ++s) {
    const std::string header = "P6\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
    std::vector<std::uint8_t> bytes(header.begin(), header.end());
    for (std::int64_t r = 0; r < rows; ++r) {
      for (std::int64_t c = 0; c < cols; ++c) {
        std::int64_t d = 0, h = 0, w = 0;
        switch (axis) {
          case Axis::kD: d = s, h = r, w = c; break;
          case Axis::kH: d = r, h = s, w = c; break;
          case Axis::kW: d = r, h = c, w = s; break;
        }
        const auto cat = static_cast<std::size_t>(confusion.value(confusion.index(0, d, h, w)));
        const auto* rgb = kColors[cat < 4 ? cat : 0];
        bytes.insert(bytes.end(), rgb, rgb + 3);
      }
    }
    char name[32];
    std::snprintf(name, sizeof name, "slice_%04lld.ppm", static_cast<long long>(s));
    write_file_atomic(out_dir / name, bytes);
    written.push_back(out_dir / name);
  }
  return written;
}

}  // namespace rootseg
