#include "skar/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "skar/error.hpp"
#include "skar/textio.hpp"

namespace skar {
namespace {

constexpr const char* kCsvHeader =
    "model,plan,seeds,final,jumpstart,asymptotic,baseline_initial,baseline_final,baseline_epoch0,"
    "transferred_epoch0";

constexpr int kTableDecimals = 4;

std::string fixed(double v) { return format_fixed(v, kTableDecimals); }

std::string pad_right(const std::string& text, std::size_t width) {
  return text.size() >= width ? text : text + std::string(width - text.size(), ' ');
}

std::string svg_number(double v) { return format_fixed(v, 2); }

void require_curve(const TrainReport& report, const char* which) {
  if (report.curve.empty()) throw DataError(std::string(which) + " report has an empty curve");
}

}  // namespace

double jumpstart(const TrainReport& baseline, const TrainReport& transferred) {
  require_curve(baseline, "baseline");
  require_curve(transferred, "transferred");
  return transferred.initial() - baseline.initial();
}

double asymptotic(const TrainReport& baseline, const TrainReport& transferred) {
  require_curve(baseline, "baseline");
  require_curve(transferred, "transferred");
  return transferred.final() - baseline.final();
}

TransferComparison compare(const std::string& model, const TrainReport& baseline, const TrainReport& transferred) {
  TransferComparison c;
  c.model = model;
  c.plan = transferred.plan;
  c.baseline = baseline;
  c.transferred = transferred;
  c.jumpstart = jumpstart(baseline, transferred);
  c.asymptotic = asymptotic(baseline, transferred);
  c.final = transferred.final();
  c.baseline_initial = baseline.initial();
  c.baseline_final = baseline.final();
  c.baseline_epoch0 = baseline.epoch0_test_acc;
  c.transferred_epoch0 = transferred.epoch0_test_acc;
  return c;
}

TrainReport mean_report(const std::vector<TrainReport>& reports) {
  if (reports.empty()) throw DataError("cannot average zero reports");
  TrainReport out = reports.front();
  const double n = static_cast<double>(reports.size());
  for (std::size_t r = 1; r < reports.size(); ++r) {
    if (reports[r].curve.size() != out.curve.size()) throw DataError("cannot average curves of different lengths");
    out.epoch0_test_acc += reports[r].epoch0_test_acc;
    for (std::size_t e = 0; e < out.curve.size(); ++e) {
      out.curve[e].loss += reports[r].curve[e].loss;
      out.curve[e].train_acc += reports[r].curve[e].train_acc;
      out.curve[e].test_acc += reports[r].curve[e].test_acc;
    }
  }
  out.epoch0_test_acc /= n;
  for (auto& e : out.curve) {
    e.loss /= n;
    e.train_acc /= n;
    e.test_acc /= n;
  }
  return out;
}

TransferComparison average(const std::vector<TransferComparison>& runs) {
  if (runs.empty()) throw DataError("cannot average zero comparisons");
  std::vector<TrainReport> baselines;
  std::vector<TrainReport> transferred;
  TransferComparison out;
  out.model = runs.front().model;
  out.plan = runs.front().plan;
  out.seeds = 0;
  for (const auto& r : runs) {
    if (r.model != out.model || r.plan != out.plan) throw DataError("averaged comparisons must share model and plan");
    baselines.push_back(r.baseline);
    transferred.push_back(r.transferred);
    out.jumpstart += r.jumpstart;
    out.asymptotic += r.asymptotic;
    out.final += r.final;
    out.baseline_initial += r.baseline_initial;
    out.baseline_final += r.baseline_final;
    out.baseline_epoch0 += r.baseline_epoch0;
    out.transferred_epoch0 += r.transferred_epoch0;
    out.seeds += r.seeds;
  }
  const double n = static_cast<double>(runs.size());
  out.jumpstart /= n;
  out.asymptotic /= n;
  out.final /= n;
  out.baseline_initial /= n;
  out.baseline_final /= n;
  out.baseline_epoch0 /= n;
  out.transferred_epoch0 /= n;
  out.baseline = mean_report(baselines);
  out.transferred = mean_report(transferred);
  return out;
}

std::string summary_table(const std::vector<TransferComparison>& comparisons) {
  const std::vector<std::string> header = {"Model",     "Plan",       "Seeds",
                                           "Final achieved performance", "Jumpstart",
                                           "Asymptotic performance",     "Baseline initial",
                                           "Baseline final",             "Epoch-0 baseline",
                                           "Epoch-0 transferred"};
  std::vector<std::vector<std::string>> rows = {header};
  for (const auto& c : comparisons) {
    rows.push_back({c.model, c.plan, std::to_string(c.seeds), fixed(c.final), fixed(c.jumpstart),
                    fixed(c.asymptotic), fixed(c.baseline_initial), fixed(c.baseline_final),
                    fixed(c.baseline_epoch0), fixed(c.transferred_epoch0)});
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  std::string text;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::string line;
    for (std::size_t i = 0; i < rows[r].size(); ++i) {
      line += i + 1 == rows[r].size() ? rows[r][i] : pad_right(rows[r][i], width[i] + 2);
    }
    text += line + "\n";
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t i = 0; i < width.size(); ++i) total += width[i] + (i + 1 == width.size() ? 0 : 2);
      text += std::string(total, '-') + "\n";
    }
  }
  return text;
}

std::string summary_csv(const std::vector<TransferComparison>& comparisons) {
  std::string text = std::string(kCsvHeader) + "\n";
  for (const auto& c : comparisons) {
    text += c.model + "," + c.plan + "," + std::to_string(c.seeds) + "," + fixed(c.final) + "," + fixed(c.jumpstart) +
            "," + fixed(c.asymptotic) + "," + fixed(c.baseline_initial) + "," + fixed(c.baseline_final) + "," +
            fixed(c.baseline_epoch0) + "," + fixed(c.transferred_epoch0) + "\n";
  }
  return text;
}

std::vector<SummaryRow> parse_summary_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<SummaryRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = "summary.csv:" + std::to_string(line_no);
    if (line_no == 1) {
      if (line != kCsvHeader) throw DataError(where + ": unexpected header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) f.push_back(cell);
    if (f.size() != 10) throw DataError(where + ": expected 10 columns");
    SummaryRow row;
    row.model = f[0];
    row.plan = f[1];
    row.seeds = static_cast<std::size_t>(parse_double(f[2], where));
    row.final = parse_double(f[3], where);
    row.jumpstart = parse_double(f[4], where);
    row.asymptotic = parse_double(f[5], where);
    row.baseline_initial = parse_double(f[6], where);
    row.baseline_final = parse_double(f[7], where);
    row.baseline_epoch0 = parse_double(f[8], where);
    row.transferred_epoch0 = parse_double(f[9], where);
    rows.push_back(row);
  }
  return rows;
}

std::string curves_svg(const TransferComparison& c) {
  const double width = 640;
  const double height = 400;
  const double left = 60;
  const double right = 20;
  const double top = 40;
  const double bottom = 50;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  const std::size_t epochs = std::max({c.baseline.curve.size(), c.transferred.curve.size(), std::size_t{1}});
  auto x_of = [&](double epoch) { return left + plot_w * epoch / static_cast<double>(epochs); };
  auto y_of = [&](double acc) { return top + plot_h * (1.0 - acc); };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + svg_number(width) + "\" height=\"" +
                    svg_number(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + svg_number(width / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + c.model +
         " " + c.plan + ": test accuracy</text>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double acc = tick * 0.25;
    const std::string y = svg_number(y_of(acc));
    svg += "<line x1=\"" + svg_number(left) + "\" y1=\"" + y + "\" x2=\"" + svg_number(left + plot_w) + "\" y2=\"" +
           y + "\" stroke=\"#dddddd\"/>\n";
    svg += "<text x=\"" + svg_number(left - 8) + "\" y=\"" + y + "\" text-anchor=\"end\" dy=\"4\">" +
           format_fixed(acc, 2) + "</text>\n";
  }
  const std::size_t step = std::max<std::size_t>(1, (epochs + 9) / 10);
  for (std::size_t e = 0; e <= epochs; e += step) {
    svg += "<text x=\"" + svg_number(x_of(static_cast<double>(e))) + "\" y=\"" + svg_number(top + plot_h + 18) +
           "\" text-anchor=\"middle\">" + std::to_string(e) + "</text>\n";
  }
  svg += "<line x1=\"" + svg_number(left) + "\" y1=\"" + svg_number(top + plot_h) + "\" x2=\"" +
         svg_number(left + plot_w) + "\" y2=\"" + svg_number(top + plot_h) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + svg_number(left) + "\" y1=\"" + svg_number(top) + "\" x2=\"" + svg_number(left) +
         "\" y2=\"" + svg_number(top + plot_h) + "\" stroke=\"black\"/>\n";
  svg += "<text x=\"" + svg_number(left + plot_w / 2) + "\" y=\"" + svg_number(height - 10) +
         "\" text-anchor=\"middle\">epoch</text>\n";

  auto polyline = [&](const TrainReport& report, const std::string& colour, const std::string& label, double ly) {
    std::string points = svg_number(x_of(0)) + "," + svg_number(y_of(report.epoch0_test_acc));
    for (const auto& r : report.curve) {
      points += " " + svg_number(x_of(static_cast<double>(r.epoch))) + "," + svg_number(y_of(r.test_acc));
    }
    std::string out = "<polyline fill=\"none\" stroke=\"" + colour + "\" stroke-width=\"2\" points=\"" + points +
                      "\"/>\n";
    out += "<line x1=\"" + svg_number(left + plot_w - 150) + "\" y1=\"" + svg_number(ly) + "\" x2=\"" +
           svg_number(left + plot_w - 125) + "\" y2=\"" + svg_number(ly) + "\" stroke=\"" + colour +
           "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + svg_number(left + plot_w - 120) + "\" y=\"" + svg_number(ly) + "\" dy=\"4\">" + label +
           "</text>\n";
    return out;
  };
  svg += polyline(c.baseline, "#1f77b4", "baseline", top + plot_h - 40);
  svg += polyline(c.transferred, "#d62728", c.plan, top + plot_h - 22);
  svg += "</svg>\n";
  return svg;
}

std::vector<std::filesystem::path> render_report(const std::vector<TransferComparison>& comparisons,
                                                 const std::filesystem::path& out_dir) {
  if (comparisons.empty()) throw DataError("a report needs at least one comparison");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create report directory " + out_dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written = {out_dir / "summary.txt", out_dir / "summary.csv"};
  write_text(written[0], summary_table(comparisons));
  write_text(written[1], summary_csv(comparisons));
  std::set<std::string> names;
  for (const auto& c : comparisons) {
    const std::string name = "curves_" + c.model + "_" + c.plan + ".svg";
    if (!names.insert(name).second) throw DataError("two comparisons would both write " + name);
    written.push_back(out_dir / name);
    write_text(written.back(), curves_svg(c));
  }
  return written;
}

}  // namespace skar
