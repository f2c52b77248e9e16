#include "fedka/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "fedka/error.hpp"

namespace fedka::metrics {

AccuracyReport accuracy_from_logits(const nn::Matrix& logits, std::span<const int> labels, std::size_t class_count) {
    if (labels.size() != logits.rows) throw ShapeError(-1, "label count does not match logit rows");
    std::vector<std::size_t> total(class_count, 0), hit(class_count, 0);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < logits.rows; ++r) {
        const auto row = logits.row(r);
        const auto pred = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        const auto y = static_cast<std::size_t>(labels[r]);
        ++total[y];
        if (pred == labels[r]) {
            ++hit[y];
            ++correct;
        }
    }
    AccuracyReport rep;
    rep.global = logits.rows ? static_cast<double>(correct) / static_cast<double>(logits.rows) : 0.0;
    rep.per_class.resize(class_count);
    for (std::size_t k = 0; k < class_count; ++k)
        if (total[k]) rep.per_class[k] = static_cast<double>(hit[k]) / static_cast<double>(total[k]);
    return rep;
}

AccuracyReport evaluate(const nn::ModelState& state, const nn::NetworkSpec& spec, const data::LabeledDataset& test) {
    constexpr std::size_t chunk = 512;
    nn::Matrix logits(test.size(), spec.class_count);
    std::vector<std::size_t> ids;
    for (std::size_t start = 0; start < test.size(); start += chunk) {
        const std::size_t end = std::min(test.size(), start + chunk);
        ids.resize(end - start);
        std::iota(ids.begin(), ids.end(), start);
        const auto part = nn::forward_logits(state, spec, data::gather_inputs(test, ids));
        std::copy(part.data.begin(), part.data.end(),
                  logits.data.begin() + static_cast<std::ptrdiff_t>(start * spec.class_count));
    }
    return accuracy_from_logits(logits, test.labels, test.class_count);
}

std::vector<std::optional<double>> classwise_accuracy(const nn::ModelState& state, const nn::NetworkSpec& spec,
                                                      const data::LabeledDataset& test) {
    return evaluate(state, spec, test).per_class;
}

double forgetting_degree(double acc_global, double acc_local, double xi) {
    if (!(xi > 0.0)) throw Error("xi must be positive");
    if (!(acc_global >= 0.0 && acc_global <= 1.0 && acc_local >= 0.0 && acc_local <= 1.0))
        throw Error("accuracies must lie in [0, 1]");
    return (acc_global - acc_local) / (acc_global + xi);
}

std::vector<ForgettingRecord> measure_local_forgetting(const data::ClientShard& shard, const AccuracyReport& global,
                                                       const AccuracyReport& local, std::size_t round, double xi) {
    std::vector<ForgettingRecord> out;
    for (std::size_t k = 0; k < global.per_class.size(); ++k) {
        if (!global.per_class[k] || !local.per_class[k]) continue;
        ForgettingRecord r;
        r.round = round;
        r.client = shard.client_id;
        r.cls = static_cast<int>(k);
        r.role = shard.roles.role_of(r.cls);
        r.acc_global = *global.per_class[k];
        r.acc_local = *local.per_class[k];
        r.tau = forgetting_degree(r.acc_global, r.acc_local, xi);
        out.push_back(r);
    }
    return out;
}

std::vector<ForgettingRecord> measure_local_forgetting(const data::ClientShard& shard,
                                                       const nn::ModelState& global_state,
                                                       const nn::ModelState& local_state, const nn::NetworkSpec& spec,
                                                       const data::LabeledDataset& test, std::size_t round, double xi) {
    return measure_local_forgetting(shard, evaluate(global_state, spec, test), evaluate(local_state, spec, test), round,
                                    xi);
}

std::optional<std::size_t> rounds_to_target(const Curve& curve, double target) {
    for (const auto& [round, acc] : curve)
        if (acc >= target) return round;
    return std::nullopt;
}

std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_rounds_header(std::ostream& out, std::size_t class_count) {
    out << "round,global_acc";
    for (std::size_t k = 0; k < class_count; ++k) out << ",acc_class_" << k;
    out << '\n';
}

void append_round(std::ostream& out, const RoundRecord& rec) {
    out << rec.round << ',' << format_number(rec.accuracy.global);
    for (const auto& a : rec.accuracy.per_class) {
        out << ',';
        if (a) out << format_number(*a);
    }
    out << '\n';
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

data::Role parse_role(const std::string& s) {
    if (s == "dominant") return data::Role::dominant;
    if (s == "non_dominant") return data::Role::non_dominant;
    if (s == "missing") return data::Role::missing;
    throw Error("unknown role '" + s + "'");
}

}  // namespace

Curve read_rounds_curve(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("round,global_acc", 0) != 0)
        throw Error("rounds CSV must start with 'round,global_acc'");
    Curve curve;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() < 2) throw Error("malformed rounds CSV line: " + line);
        curve.emplace_back(std::stoull(cells[0]), std::stod(cells[1]));
    }
    return curve;
}

void write_forgetting_header(std::ostream& out) { out << "round,client,class,role,acc_global,acc_local,tau\n"; }

void append_forgetting(std::ostream& out, const ForgettingRecord& r) {
    out << r.round << ',' << r.client << ',' << r.cls << ',' << data::role_name(r.role) << ','
        << format_number(r.acc_global) << ',' << format_number(r.acc_local) << ',' << format_number(r.tau) << '\n';
}

std::vector<ForgettingRecord> read_forgetting_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "round,client,class,role,acc_global,acc_local,tau")
        throw Error("forgetting CSV has an unexpected header");
    std::vector<ForgettingRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c = split_csv(line);
        if (c.size() != 7) throw Error("malformed forgetting CSV line: " + line);
        ForgettingRecord r;
        r.round = std::stoull(c[0]);
        r.client = std::stoull(c[1]);
        r.cls = std::stoi(c[2]);
        r.role = parse_role(c[3]);
        r.acc_global = std::stod(c[4]);
        r.acc_local = std::stod(c[5]);
        r.tau = std::stod(c[6]);
        out.push_back(r);
    }
    return out;
}

}  // namespace fedka::metrics
