#include "growthssm/io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "growthssm/error.hpp"

namespace growthssm {

namespace {

using json = nlohmann::ordered_json;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

/// Splits one CSV line; double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_csv(const std::string& line, const std::string& where) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
            was_quoted = true;
        } else if (c == ',') {
            fields.push_back(was_quoted ? cur : trim(cur));
            cur.clear();
            was_quoted = false;
        } else {
            cur += c;
        }
    }
    if (quoted) throw InputError(where + ": unterminated quote");
    fields.push_back(was_quoted ? cur : trim(cur));
    return fields;
}

double parse_number(const std::string& s, const std::string& where, const char* column) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw InputError(where + ": " + column + " '" + s + "' is not a number");
    }
    if (pos != s.size()) throw InputError(where + ": " + column + " '" + s + "' is not a number");
    if (!std::isfinite(v)) throw InputError(where + ": " + column + " '" + s + "' is not finite");
    return v;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
    return os.str();
}

} // namespace

Dataset parse_long_csv(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t line_no = 0;
    std::map<std::string, std::size_t> col;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) break;
    }
    if (trim(line).empty()) throw InputError(source + ": empty file, expected header group,replicate,time,value");
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    {
        const auto header = split_csv(line, source + ":" + std::to_string(line_no));
        for (std::size_t i = 0; i < header.size(); ++i) {
            std::string h = header[i];
            for (auto& c : h) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            col[h] = i;
        }
        for (const char* need : {"group", "replicate", "time", "value"}) {
            if (!col.count(need)) throw InputError(source + ":" + std::to_string(line_no) + ": header lacks column '" + need + "'");
        }
    }
    std::vector<Record> records;
    std::map<std::tuple<std::string, std::string, double>, std::size_t> first_line;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = source + ":" + std::to_string(line_no);
        const auto f = split_csv(line, where);
        if (f.size() != col.size()) {
            throw InputError(where + ": expected " + std::to_string(col.size()) + " fields, got " + std::to_string(f.size()));
        }
        Record r;
        r.group = f[col["group"]];
        r.replicate = f[col["replicate"]];
        r.time = parse_number(f[col["time"]], where, "time");
        const auto& v = f[col["value"]];
        if (!v.empty() && v != "NA" && v != "na") r.value = parse_number(v, where, "value");
        const auto [it, fresh] = first_line.emplace(std::make_tuple(r.group, r.replicate, r.time), line_no);
        if (!fresh) {
            throw InputError(where + ": duplicate (group, replicate, time) = (" + r.group + ", " + r.replicate + ", " +
                             f[col["time"]] + "), first seen on line " + std::to_string(it->second));
        }
        records.push_back(std::move(r));
    }
    return Dataset(std::move(records));
}

Dataset read_long_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    return parse_long_csv(in, path.string());
}

void write_long_csv(const Dataset& data, std::ostream& out) {
    out << "group,replicate,time,value\n";
    for (const auto& r : data.records()) {
        out << csv_field(r.group) << ',' << csv_field(r.replicate) << ',' << format_double(r.time) << ',';
        if (r.value) out << format_double(*r.value);
        out << '\n';
    }
}

void write_long_csv(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    write_long_csv(data, out);
}

Dataset augment_grid(const Dataset& data, double step) {
    if (!(step > 0.0) || !std::isfinite(step)) throw InputError("grid step must be positive, got " + std::to_string(step));
    std::vector<Record> records = data.records();
    std::map<std::pair<std::string, std::string>, std::vector<double>> times;
    std::vector<std::pair<std::string, std::string>> order;
    for (const auto& r : records) {
        auto key = std::make_pair(r.group, r.replicate);
        if (!times.count(key)) order.push_back(key);
        times[key].push_back(r.time);
    }
    const double tol = 1e-9 * step;
    for (const auto& key : order) {
        auto& ts = times[key];
        std::sort(ts.begin(), ts.end());
        const auto k_lo = static_cast<long long>(std::ceil(ts.front() / step - 1e-9));
        const auto k_hi = static_cast<long long>(std::floor(ts.back() / step + 1e-9));
        for (long long k = k_lo; k <= k_hi; ++k) {
            const double t = static_cast<double>(k) * step;
            const auto it = std::lower_bound(ts.begin(), ts.end(), t - tol);
            if (it != ts.end() && *it <= t + tol) continue;
            records.push_back(Record{key.first, key.second, t, std::nullopt});
        }
    }
    return Dataset(std::move(records));
}

Dataset scale_values(const Dataset& data, double factor) {
    if (!(factor > 0.0) || !std::isfinite(factor)) throw InputError("value scale must be positive");
    std::vector<Record> records = data.records();
    for (auto& r : records) {
        if (r.value) *r.value *= factor;
    }
    return Dataset(std::move(records));
}

bool FitArtifact::operator==(const FitArtifact& o) const { return dump_artifact(*this) == dump_artifact(o); }

FitArtifact make_artifact(const FitResult& fit, const Dataset& fitted_data, double value_scale) {
    FitArtifact a;
    a.group = fitted_data.empty() ? std::string{} : fitted_data.records().front().group;
    a.value_scale = value_scale;
    a.spec = fit.spec;
    a.free_params = fit.space.params();
    a.loglik = fit.loglik;
    a.bic = fit.bic;
    a.n_used = fit.n_used;
    a.d = fit.d;
    a.constant_scale = fit.constant_scale;
    a.convergence = fit.convergence;
    a.mean = fit.mean;
    a.mean_band = confidence_band(fit.mean);
    a.deviations = fit.deviations;
    a.warnings = fit.warnings;
    a.data = fitted_data;
    return a;
}

namespace {

/// Non-finite entries (failed starts) become null and read back as -inf.
json nullable(const std::vector<double>& v) {
    json out = json::array();
    for (double x : v) out.push_back(std::isfinite(x) ? json(x) : json(nullptr));
    return out;
}

std::vector<double> from_nullable(const json& j) {
    std::vector<double> out;
    for (const auto& x : j) out.push_back(x.is_null() ? -std::numeric_limits<double>::infinity() : x.get<double>());
    return out;
}

json series_json(const ComponentSeries& c) {
    return json{{"times", c.times}, {"estimate", c.estimate}, {"variance", c.variance}};
}

ComponentSeries series_from(const json& j) {
    ComponentSeries c;
    j.at("times").get_to(c.times);
    j.at("estimate").get_to(c.estimate);
    j.at("variance").get_to(c.variance);
    return c;
}

} // namespace

json to_json(const FitArtifact& a) {
    json doc;
    doc["version"] = a.version;
    doc["group"] = a.group;
    doc["value_scale"] = a.value_scale;
    doc["spec"] = json{{"family", to_string(a.spec.family)},
                       {"mode", to_string(a.spec.mode)},
                       {"deviations", to_string(a.spec.deviations)},
                       {"replicates", a.spec.replicates},
                       {"phi", a.spec.curve.phi},
                       {"rho", a.spec.curve.rho},
                       {"nu", a.spec.curve.nu},
                       {"sigma2_eps", a.spec.noise.sigma2_eps},
                       {"sigma2_eta", a.spec.noise.sigma2_eta},
                       {"sigma2_dev", a.spec.noise.sigma2_dev}};
    json free = json::array();
    for (auto k : a.free_params) free.push_back(to_string(k));
    doc["free_params"] = free;
    doc["loglik"] = a.loglik;
    doc["bic"] = a.bic;
    doc["n_used"] = a.n_used;
    doc["d"] = a.d;
    doc["constant_scale"] = a.constant_scale
                                ? json{{"constant", a.constant_scale->constant}, {"scale", a.constant_scale->scale}}
                                : json(nullptr);
    const auto& c = a.convergence;
    doc["convergence"] = json{{"iterations", c.iterations},   {"evaluations", c.evaluations},
                              {"restarts", c.restarts},       {"final_size", c.final_size},
                              {"converged", c.converged},     {"start_logliks", nullable(c.start_logliks)},
                              {"multimodal", c.multimodal},   {"trace", nullable(c.trace)}};
    doc["mean"] = series_json(a.mean);
    doc["mean_band"] = json{{"level", a.mean_band.level}, {"lower", a.mean_band.lower}, {"upper", a.mean_band.upper}};
    json devs = json::array();
    for (std::size_t i = 0; i < a.deviations.size(); ++i) {
        json d = series_json(a.deviations[i]);
        d["replicate"] = i < a.spec.replicates.size() ? a.spec.replicates[i] : std::to_string(i);
        devs.push_back(d);
    }
    doc["deviations"] = devs;
    doc["warnings"] = a.warnings;
    json rows = json::array();
    for (const auto& r : a.data.records()) {
        rows.push_back(json::array({r.group, r.replicate, r.time, r.value ? json(*r.value) : json(nullptr)}));
    }
    doc["data"] = rows;
    return doc;
}

FitArtifact artifact_from_json(const json& doc) {
    try {
        FitArtifact a;
        a.version = doc.at("version").get<std::string>();
        if (a.version != "1") throw InputError("unsupported artifact version '" + a.version + "'");
        a.group = doc.at("group").get<std::string>();
        a.value_scale = doc.at("value_scale").get<double>();
        const auto& s = doc.at("spec");
        a.spec.family = parse_family(s.at("family").get<std::string>());
        a.spec.mode = parse_mode(s.at("mode").get<std::string>());
        a.spec.deviations = parse_deviations(s.at("deviations").get<std::string>());
        s.at("replicates").get_to(a.spec.replicates);
        a.spec.curve = CurveParams{s.at("phi").get<double>(), s.at("rho").get<double>(), s.at("nu").get<double>()};
        a.spec.noise = NoiseParams{s.at("sigma2_eps").get<double>(), s.at("sigma2_eta").get<double>(),
                                   s.at("sigma2_dev").get<double>()};
        for (const auto& k : doc.at("free_params")) a.free_params.push_back(parse_param(k.get<std::string>()));
        a.loglik = doc.at("loglik").get<double>();
        a.bic = doc.at("bic").get<double>();
        a.n_used = doc.at("n_used").get<std::size_t>();
        a.d = doc.at("d").get<int>();
        if (const auto& cs = doc.at("constant_scale"); !cs.is_null()) {
            a.constant_scale = ConstantScale{cs.at("constant").get<double>(), cs.at("scale").get<double>()};
        }
        const auto& c = doc.at("convergence");
        a.convergence.iterations = c.at("iterations").get<int>();
        a.convergence.evaluations = c.at("evaluations").get<int>();
        a.convergence.restarts = c.at("restarts").get<int>();
        a.convergence.final_size = c.at("final_size").get<double>();
        a.convergence.converged = c.at("converged").get<bool>();
        a.convergence.start_logliks = from_nullable(c.at("start_logliks"));
        a.convergence.multimodal = c.at("multimodal").get<bool>();
        a.convergence.trace = from_nullable(c.at("trace"));
        a.mean = series_from(doc.at("mean"));
        const auto& b = doc.at("mean_band");
        a.mean_band.level = b.at("level").get<double>();
        a.mean_band.times = a.mean.times;
        a.mean_band.estimate = a.mean.estimate;
        b.at("lower").get_to(a.mean_band.lower);
        b.at("upper").get_to(a.mean_band.upper);
        for (const auto& d : doc.at("deviations")) a.deviations.push_back(series_from(d));
        doc.at("warnings").get_to(a.warnings);
        std::vector<Record> records;
        for (const auto& row : doc.at("data")) {
            Record r;
            r.group = row.at(0).get<std::string>();
            r.replicate = row.at(1).get<std::string>();
            r.time = row.at(2).get<double>();
            if (!row.at(3).is_null()) r.value = row.at(3).get<double>();
            records.push_back(std::move(r));
        }
        a.data = Dataset(std::move(records));
        return a;
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed artifact: ") + e.what());
    }
}

std::string dump_artifact(const FitArtifact& artifact) { return to_json(artifact).dump(2) + "\n"; }

void write_artifact(const FitArtifact& artifact, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << dump_artifact(artifact);
}

FitArtifact read_artifact(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
    return artifact_from_json(doc);
}

void write_band_csv(const Band& band, const std::vector<double>& variance, std::ostream& out) {
    out << "time,estimate,variance,lower,upper\n";
    for (std::size_t i = 0; i < band.times.size(); ++i) {
        out << format_double(band.times[i]) << ',' << format_double(band.estimate[i]) << ','
            << format_double(variance[i]) << ',' << format_double(band.lower[i]) << ','
            << format_double(band.upper[i]) << '\n';
    }
}

} // namespace growthssm
