#include "mvd/evaluation.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mvd {

namespace fs = std::filesystem;
using nlohmann::json;

double attack_success_rate(std::span<const int> adv_preds, std::span<const int> references, SuccessMode mode, int target) {
    if (adv_preds.size() != references.size()) throw ShapeError("prediction/reference count mismatch");
    if (adv_preds.empty()) throw InvalidArgument("empty prediction set");
    long hits = 0, considered = 0;
    for (size_t i = 0; i < adv_preds.size(); ++i) {
        if (mode == SuccessMode::targeted) {
            if (references[i] == target) continue;  // already the target; excluded
            ++considered;
            if (adv_preds[i] == target) ++hits;
        } else {
            ++considered;
            if (adv_preds[i] != references[i]) ++hits;
        }
    }
    return considered == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(considered);
}

ClassMetrics classification_metrics(std::span<const int> preds, std::span<const int> labels, long class_count) {
    if (preds.size() != labels.size()) throw ShapeError("prediction/label count mismatch");
    for (int l : labels)
        if (l < 0 || l >= class_count) throw InvalidArgument("label out of range");

    std::vector<long> tp(static_cast<size_t>(class_count), 0);
    std::vector<long> fp(static_cast<size_t>(class_count), 0);
    std::vector<long> fn(static_cast<size_t>(class_count), 0);
    for (size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == labels[i]) {
            ++tp[static_cast<size_t>(labels[i])];
        } else {
            if (preds[i] >= 0 && preds[i] < class_count) ++fp[static_cast<size_t>(preds[i])];
            ++fn[static_cast<size_t>(labels[i])];
        }
    }

    ClassMetrics m;
    m.precision.resize(static_cast<size_t>(class_count));
    m.recall.resize(static_cast<size_t>(class_count));
    m.f1.resize(static_cast<size_t>(class_count));
    m.degenerate.resize(static_cast<size_t>(class_count));
    for (long k = 0; k < class_count; ++k) {
        const size_t i = static_cast<size_t>(k);
        const long pd = tp[i] + fp[i];
        const long rd = tp[i] + fn[i];
        m.degenerate[i] = pd == 0 || rd == 0;
        m.precision[i] = pd == 0 ? 0.0 : static_cast<double>(tp[i]) / static_cast<double>(pd);
        m.recall[i] = rd == 0 ? 0.0 : static_cast<double>(tp[i]) / static_cast<double>(rd);
        const double pr = m.precision[i] + m.recall[i];
        m.f1[i] = pr == 0.0 ? 0.0 : 2.0 * m.precision[i] * m.recall[i] / pr;
        m.macro_precision += m.precision[i];
        m.macro_recall += m.recall[i];
        m.macro_f1 += m.f1[i];
    }
    m.macro_precision /= static_cast<double>(class_count);
    m.macro_recall /= static_cast<double>(class_count);
    m.macro_f1 /= static_cast<double>(class_count);
    return m;
}

namespace {

StatTriple triple_of(const std::vector<double>& v) {
    StatTriple t;
    t.min = v.front();
    t.max = v.front();
    double acc = 0.0;
    for (double x : v) {
        t.min = std::min(t.min, x);
        t.max = std::max(t.max, x);
        acc += x;
    }
    t.mean = acc / static_cast<double>(v.size());
    return t;
}

}  // namespace

std::pair<StatTriple, StatTriple> distortion_stats(const AdversarialBatch& batch) {
    if (batch.l2_vs_original.empty()) throw InvalidArgument("empty adversarial batch");
    StatTriple vs_recon;
    if (!batch.l2_vs_reconstruction.empty()) vs_recon = triple_of(batch.l2_vs_reconstruction);
    return {triple_of(batch.l2_vs_original), vs_recon};
}

double runtime_benchmark(const std::function<void()>& run_batch, long n, long repetitions) {
    if (n < 1) throw InvalidArgument("benchmark needs at least one example");
    if (repetitions < 1) throw InvalidArgument("benchmark needs at least one repetition");
    run_batch();  // warm-up, untimed
    const auto t0 = std::chrono::steady_clock::now();
    for (long r = 0; r < repetitions; ++r) run_batch();
    const auto t1 = std::chrono::steady_clock::now();
    const double total = std::chrono::duration<double>(t1 - t0).count();
    return total / static_cast<double>(n * repetitions);
}

// ---------------------------------------------------------------------------
// Report records

namespace {

json triple_json(const StatTriple& t) { return json{{"min", t.min}, {"mean", t.mean}, {"max", t.max}}; }

}  // namespace

std::string AttackReport::to_json() const {
    json j;
    j["threat_model"] = threat_model;
    j["attack"] = attack_name;
    j["dataset"] = dataset;
    j["mode"] = mode == SuccessMode::targeted ? "targeted" : "non_targeted";
    if (mode == SuccessMode::targeted) j["target"] = target;
    j["success_rate"] = success_rate;
    j["successes"] = successes;
    j["evaluated"] = evaluated;
    j["macro"] = {{"precision", metrics.macro_precision}, {"recall", metrics.macro_recall}, {"f1", metrics.macro_f1}};
    json per_class = json::array();
    for (size_t k = 0; k < metrics.precision.size(); ++k)
        per_class.push_back({{"class", k},
                             {"precision", metrics.precision[k]},
                             {"recall", metrics.recall[k]},
                             {"f1", metrics.f1[k]},
                             {"degenerate", static_cast<bool>(metrics.degenerate[k])}});
    j["per_class"] = per_class;
    j["l2_vs_original"] = triple_json(l2_vs_original);
    j["l2_vs_reconstruction"] = triple_json(l2_vs_reconstruction);
    j["per_example_seconds"] = per_example_seconds;
    j["seed"] = seed;
    j["config"] = config_echo;
    return j.dump(2);
}

std::string AttackReport::to_table_tsv() const {
    std::ostringstream os;
    os << "metric\tvalue\n";
    os << "success_rate\t" << success_rate << "\n";
    os << "macro_precision\t" << metrics.macro_precision << "\n";
    os << "macro_recall\t" << metrics.macro_recall << "\n";
    os << "macro_f1\t" << metrics.macro_f1 << "\n";
    os << "l2_orig_min\t" << l2_vs_original.min << "\n";
    os << "l2_orig_mean\t" << l2_vs_original.mean << "\n";
    os << "l2_orig_max\t" << l2_vs_original.max << "\n";
    os << "l2_recon_min\t" << l2_vs_reconstruction.min << "\n";
    os << "l2_recon_mean\t" << l2_vs_reconstruction.mean << "\n";
    os << "l2_recon_max\t" << l2_vs_reconstruction.max << "\n";
    os << "per_example_seconds\t" << per_example_seconds << "\n";
    return os.str();
}

std::string targeted_matrix_tsv(const std::string& dataset,
                                const std::vector<std::pair<std::string, TargetedMatrixSummary>>& rows) {
    std::ostringstream os;
    os << "threat_model\tdataset\tworst\taverage\tbest\n";
    for (const auto& [name, summary] : rows)
        os << name << "\t" << dataset << "\t" << summary.summary.min << "\t" << summary.summary.mean << "\t"
           << summary.summary.max << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// SVG plots

namespace {

struct PlotFrame {
    double x0 = 60, y0 = 30, w = 520, h = 300;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    double px(double x) const { return x0 + (x - xmin) / (xmax - xmin + 1e-12) * w; }
    double py(double y) const { return y0 + h - (y - ymin) / (ymax - ymin + 1e-12) * h; }
};

const char* kSeriesColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

}  // namespace

void write_svg_line_plot(const std::string& path, const std::string& title, const std::vector<double>& xs,
                         const std::vector<std::pair<std::string, std::vector<double>>>& series) {
    if (xs.empty() || series.empty()) throw InvalidArgument("empty plot data");
    PlotFrame f;
    f.xmin = *std::min_element(xs.begin(), xs.end());
    f.xmax = *std::max_element(xs.begin(), xs.end());
    f.ymin = 1e30;
    f.ymax = -1e30;
    for (const auto& [_, ys] : series)
        for (double y : ys) {
            f.ymin = std::min(f.ymin, y);
            f.ymax = std::max(f.ymax, y);
        }
    if (f.ymax <= f.ymin) f.ymax = f.ymin + 1.0;
    const double pad = 0.05 * (f.ymax - f.ymin);
    f.ymin -= pad;
    f.ymax += pad;

    std::ofstream os(path);
    if (!os) throw IoError("cannot write plot " + path);
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='640' height='400' font-family='sans-serif'>\n";
    os << "<text x='320' y='18' text-anchor='middle' font-size='14'>" << title << "</text>\n";
    os << "<rect x='" << f.x0 << "' y='" << f.y0 << "' width='" << f.w << "' height='" << f.h
       << "' fill='none' stroke='#333'/>\n";
    for (int g = 0; g <= 4; ++g) {
        const double y = f.ymin + (f.ymax - f.ymin) * g / 4.0;
        os << "<line x1='" << f.x0 << "' y1='" << f.py(y) << "' x2='" << f.x0 + f.w << "' y2='" << f.py(y)
           << "' stroke='#ddd'/>\n";
        os << "<text x='" << f.x0 - 6 << "' y='" << f.py(y) + 4 << "' text-anchor='end' font-size='11'>";
        os << std::round(y * 1000.0) / 1000.0 << "</text>\n";
        const double x = f.xmin + (f.xmax - f.xmin) * g / 4.0;
        os << "<text x='" << f.px(x) << "' y='" << f.y0 + f.h + 16 << "' text-anchor='middle' font-size='11'>";
        os << std::round(x * 1000.0) / 1000.0 << "</text>\n";
    }
    int color = 0;
    double legend_y = f.y0 + 12;
    for (const auto& [name, ys] : series) {
        const char* col = kSeriesColors[color % 5];
        std::ostringstream pts;
        for (size_t i = 0; i < xs.size() && i < ys.size(); ++i) pts << f.px(xs[i]) << "," << f.py(ys[i]) << " ";
        os << "<polyline points='" << pts.str() << "' fill='none' stroke='" << col << "' stroke-width='2'/>\n";
        for (size_t i = 0; i < xs.size() && i < ys.size(); ++i)
            os << "<circle cx='" << f.px(xs[i]) << "' cy='" << f.py(ys[i]) << "' r='3' fill='" << col << "'/>\n";
        os << "<text x='" << f.x0 + f.w - 8 << "' y='" << legend_y << "' text-anchor='end' font-size='11' fill='" << col
           << "'>" << name << "</text>\n";
        legend_y += 14;
        ++color;
    }
    os << "</svg>\n";
}

void write_svg_bar_plot(const std::string& path, const std::string& title, const std::vector<std::string>& labels,
                        const std::vector<double>& values) {
    if (labels.empty() || labels.size() != values.size()) throw InvalidArgument("bad bar plot data");
    PlotFrame f;
    f.xmin = 0;
    f.xmax = static_cast<double>(labels.size());
    f.ymin = 0;
    f.ymax = *std::max_element(values.begin(), values.end());
    if (f.ymax <= 0) f.ymax = 1.0;
    f.ymax *= 1.1;

    std::ofstream os(path);
    if (!os) throw IoError("cannot write plot " + path);
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='640' height='400' font-family='sans-serif'>\n";
    os << "<text x='320' y='18' text-anchor='middle' font-size='14'>" << title << "</text>\n";
    os << "<rect x='" << f.x0 << "' y='" << f.y0 << "' width='" << f.w << "' height='" << f.h
       << "' fill='none' stroke='#333'/>\n";
    const double bw = f.w / static_cast<double>(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) {
        const double x = f.x0 + bw * static_cast<double>(i) + bw * 0.15;
        const double y = f.py(values[i]);
        os << "<rect x='" << x << "' y='" << y << "' width='" << bw * 0.7 << "' height='" << f.y0 + f.h - y
           << "' fill='#1f77b4'/>\n";
        os << "<text x='" << x + bw * 0.35 << "' y='" << f.y0 + f.h + 16 << "' text-anchor='middle' font-size='11'>"
           << labels[i] << "</text>\n";
        os << "<text x='" << x + bw * 0.35 << "' y='" << y - 4 << "' text-anchor='middle' font-size='10'>"
           << std::round(values[i] * 1000.0) / 1000.0 << "</text>\n";
    }
    os << "</svg>\n";
}

// ---------------------------------------------------------------------------
// Demo grids (PGM for 1 channel, PPM otherwise)

void write_image_grid(const std::string& path, const std::vector<const Tensor*>& rows, std::array<long, 3> shape,
                      long columns) {
    if (rows.empty() || columns < 1) throw InvalidArgument("empty image grid");
    const long h = shape[0], w = shape[1], c = shape[2];
    const long gap = 2;
    const long grid_h = static_cast<long>(rows.size()) * (h + gap) + gap;
    const long grid_w = columns * (w + gap) + gap;
    std::vector<unsigned char> canvas(static_cast<size_t>(grid_h * grid_w * c), 32);

    for (size_t r = 0; r < rows.size(); ++r) {
        const Tensor* t = rows[r];
        const long n = std::min<long>(columns, t->dim(0));
        for (long i = 0; i < n; ++i) {
            const float* src = t->row(i);
            const long oy = gap + static_cast<long>(r) * (h + gap);
            const long ox = gap + i * (w + gap);
            for (long y = 0; y < h; ++y)
                for (long x = 0; x < w; ++x)
                    for (long ch = 0; ch < c; ++ch) {
                        const float v = src[(y * w + x) * c + ch];
                        canvas[static_cast<size_t>(((oy + y) * grid_w + ox + x) * c + ch)] =
                            static_cast<unsigned char>(std::clamp(v, 0.0f, 1.0f) * 255.0f);
                    }
        }
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write image " + path);
    os << (c == 1 ? "P5\n" : "P6\n") << grid_w << " " << grid_h << "\n255\n";
    os.write(reinterpret_cast<const char*>(canvas.data()), static_cast<std::streamsize>(canvas.size()));
}

// ---------------------------------------------------------------------------
// render_report

void render_report(const std::vector<AttackReport>& reports, const std::string& out_dir, const AdversarialBatch* demo,
                   std::array<long, 3> demo_shape, long demo_columns) {
    if (reports.empty()) throw InvalidArgument("no reports to render");
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "tables", ec);
    fs::create_directories(fs::path(out_dir) / "plots", ec);
    if (!fs::exists(fs::path(out_dir) / "tables")) throw IoError("cannot create report directory " + out_dir);

    json all = json::array();
    for (size_t i = 0; i < reports.size(); ++i) {
        const AttackReport& r = reports[i];
        all.push_back(json::parse(r.to_json()));
        const std::string stem = r.attack_name + "_" + r.threat_model + (reports.size() > 1 ? "_" + std::to_string(i) : "");
        std::ofstream table(fs::path(out_dir) / "tables" / (stem + ".tsv"));
        table << r.to_table_tsv();

        std::vector<std::string> class_labels;
        for (size_t k = 0; k < r.metrics.f1.size(); ++k) class_labels.push_back(std::to_string(k));
        write_svg_bar_plot((fs::path(out_dir) / "plots" / (stem + "_f1.svg")).string(),
                           r.attack_name + " per-class F1 (" + r.threat_model + ")", class_labels, r.metrics.f1);
    }
    {
        std::ofstream record(fs::path(out_dir) / "report.json");
        if (!record) throw IoError("cannot write report record");
        record << all.dump(2) << "\n";
    }
    if (reports.size() > 1) {
        std::vector<std::string> names;
        std::vector<double> rates;
        for (const auto& r : reports) {
            names.push_back(r.attack_name + "/" + r.threat_model);
            rates.push_back(r.success_rate);
        }
        write_svg_bar_plot((fs::path(out_dir) / "plots" / "success_rates.svg").string(), "attack success rates", names,
                           rates);
    }

    if (demo && demo->originals.size() > 0) {
        const bool with_recon = demo->reconstructions.size() == demo->originals.size();
        std::vector<const Tensor*> rows{&demo->originals};
        if (with_recon) rows.push_back(&demo->reconstructions);
        rows.push_back(&demo->adversarials);
        const std::string ext = demo_shape[2] == 1 ? ".pgm" : ".ppm";
        write_image_grid((fs::path(out_dir) / ("demo_grid" + ext)).string(), rows, demo_shape, demo_columns);
        std::ofstream labels(fs::path(out_dir) / "demo_grid_labels.tsv");
        labels << "index\tclean_prediction\tadversarial_prediction\n";
        const long n = std::min<long>(demo_columns, demo->originals.dim(0));
        for (long i = 0; i < n; ++i) {
            const int cp = i < static_cast<long>(demo->clean_predictions.size()) ? demo->clean_predictions[i] : -1;
            const int ap =
                i < static_cast<long>(demo->adversarial_predictions.size()) ? demo->adversarial_predictions[i] : -1;
            labels << i << "\t" << cp << "\t" << ap << "\n";
        }
    }
}

}  // namespace mvd
