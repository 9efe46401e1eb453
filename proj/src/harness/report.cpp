#include "beamcast/harness/report.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include <json.hpp>

namespace beamcast::harness {

std::string format_number(double value)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

namespace {

std::string accuracy_or_empty(const EpochRecord& r, int k)
{
    if (!r.eval) {
        return "";
    }
    for (std::size_t i = 0; i < r.eval->ks.size(); ++i) {
        if (r.eval->ks[i] == k) {
            return format_number(r.eval->accuracy[i]);
        }
    }
    return "";
}

} // namespace

std::string metrics_csv(const std::vector<EpochRecord>& epochs, bool header)
{
    std::ostringstream out;
    if (header) {
        out << "epoch,lr,train_loss,top1,top3,top5\n";
    }
    for (const auto& r : epochs) {
        out << r.epoch + 1 << ',' << format_number(r.lr) << ',' << format_number(r.train_loss) << ','
            << accuracy_or_empty(r, 1) << ',' << accuracy_or_empty(r, 3) << ',' << accuracy_or_empty(r, 5) << '\n';
    }
    return out.str();
}

std::string timing_csv(const std::vector<EpochRecord>& epochs, bool header)
{
    std::ostringstream out;
    if (header) {
        out << "epoch,seconds\n";
    }
    for (const auto& r : epochs) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.3f", r.seconds);
        out << r.epoch + 1 << ',' << buf << '\n';
    }
    return out.str();
}

std::string confusion_csv(const std::vector<std::vector<std::uint64_t>>& matrix)
{
    std::ostringstream out;
    for (const auto& row : matrix) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            out << (j ? "," : "") << row[j];
        }
        out << '\n';
    }
    return out.str();
}

std::string summary_json(const EvalResult& result)
{
    nlohmann::ordered_json j;
    j["count"] = result.count;
    for (std::size_t i = 0; i < result.ks.size(); ++i) {
        j["top" + std::to_string(result.ks[i])] = result.accuracy[i];
    }
    return j.dump(2) + "\n";
}

std::string topk_table(const EvalResult& result)
{
    std::ostringstream out;
    out << "samples " << result.count << '\n';
    for (std::size_t i = 0; i < result.ks.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "top-%-3d %.4f\n", result.ks[i], result.accuracy[i]);
        out << buf;
    }
    return out.str();
}

std::string sweep_csv(const SweepResult& sweep)
{
    std::ostringstream out;
    out << "lr,top1,top3,status\n";
    for (const auto& arm : sweep.arms) {
        out << format_number(arm.lr) << ',';
        if (arm.report) {
            out << format_number(arm.report->final_eval.top(1)) << ',' << format_number(arm.report->final_eval.top(3))
                << ",ok\n";
        } else {
            out << ",," << (arm.diverged ? "diverged" : "failed") << '\n';
        }
    }
    return out.str();
}

std::string confusion_topn_text(const ConfusionSummary& summary)
{
    std::ostringstream out;
    out << "true\\pred";
    for (int c : summary.classes) {
        out << ',' << c;
    }
    out << ",other,count\n";
    for (std::size_t i = 0; i < summary.classes.size(); ++i) {
        out << summary.classes[i];
        for (double p : summary.percent[i]) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), ",%.1f", p);
            out << buf;
        }
        char buf[32];
        std::snprintf(buf, sizeof(buf), ",%.1f", summary.excluded[i]);
        out << buf << ',' << summary.counts[i] << '\n';
    }
    return out.str();
}

} // namespace beamcast::harness
