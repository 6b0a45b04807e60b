#include "mrt/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "mrt/errors.hpp"
#include "mrt/preprocess.hpp"

namespace mrt {

namespace fs = std::filesystem;

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        rows.push_back(split_csv_line(line));
    }
    return rows;
}

namespace {

struct Table {
    fs::path path;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        throw SchemaError(path.filename().string() + ": missing column '" + name + "'");
    }
    bool has_column(const std::string& name) const {
        return std::find(header.begin(), header.end(), name) != header.end();
    }
};

Table load_table(const fs::path& path) {
    Table t;
    t.path = path;
    auto rows = read_csv(path);
    if (rows.empty()) {
        throw SchemaError(path.filename().string() + ": empty file");
    }
    t.header = std::move(rows.front());
    rows.erase(rows.begin());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != t.header.size()) {
            throw SchemaError(path.filename().string() + ": line " + std::to_string(r + 2) + " has " +
                              std::to_string(rows[r].size()) + " fields, expected " +
                              std::to_string(t.header.size()));
        }
    }
    t.rows = std::move(rows);
    return t;
}

double parse_value(const VariableSchema& v, const std::string& s, const std::string& where) {
    if (s.empty()) return v.missing_value();
    char* end = nullptr;
    const double x = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) {
        throw SchemaError(where + ": cannot parse '" + s + "' for variable '" + v.name + "'");
    }
    if (v.kind == VarKind::categorical &&
        (x < 0 || x != std::floor(x) || x >= static_cast<double>(v.cardinality))) {
        throw SchemaError(where + ": category " + s + " out of range for '" + v.name + "' (cardinality " +
                          std::to_string(v.cardinality) + ")");
    }
    return x;
}

std::string format_value(const VariableSchema& v, double x) {
    if (std::isnan(x) || (v.kind == VarKind::categorical && x == v.missing_code())) return "";
    std::ostringstream os;
    if (v.kind == VarKind::categorical) {
        os << static_cast<long long>(x);
    } else {
        os << std::setprecision(17) << x;
    }
    return os.str();
}

std::size_t channel_index(const std::vector<VariableSchema>& obs, const std::string& name, const std::string& where) {
    for (std::size_t c = 0; c < obs.size(); ++c) {
        if (obs[c].name == name) return c;
    }
    throw SchemaError(where + ": unknown channel '" + name + "'");
}

}  // namespace

Dataset load_dataset(const fs::path& dir, const LoadOptions& options) {
    Dataset data;
    {
        std::ifstream in(dir / "manifest.json");
        if (!in) {
            throw IoError("cannot open " + (dir / "manifest.json").string());
        }
        nlohmann::json j;
        try {
            in >> j;
            data.schema = j.get<Schema>();
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError("manifest.json: " + std::string(e.what()));
        }
    }
    const Schema& schema = data.schema;
    const auto obs = schema.observed();
    const auto tvk = schema.tvk();
    const auto sta = schema.statics();

    // static.csv defines the series and their order.
    const Table st = load_table(dir / "static.csv");
    std::map<std::string, std::size_t> index;
    std::vector<std::vector<bool>> static_seen;
    {
        const auto c_id = st.column("series_id");
        const auto c_ch = st.column("channel");
        std::vector<std::size_t> c_var;
        for (const auto& v : sta) c_var.push_back(st.column(v.name));
        const bool has_end = st.has_column(schema.end_time_column);
        for (std::size_t r = 0; r < st.rows.size(); ++r) {
            const auto& row = st.rows[r];
            const std::string where = "static.csv line " + std::to_string(r + 2);
            auto [it, fresh] = index.emplace(row[c_id], data.series.size());
            if (fresh) {
                RawSeries s = make_series(schema, row[c_id], 0);
                s.statics.assign(s.channels * s.n_static, kMissing);
                for (const auto& k : schema.key) s.attributes[k] = row[st.column(k)];
                if (has_end && !row[st.column(schema.end_time_column)].empty()) {
                    s.end_time = parse_iso8601(row[st.column(schema.end_time_column)]);
                }
                data.series.push_back(std::move(s));
                static_seen.emplace_back(obs.size(), false);
            }
            auto& s = data.series[it->second];
            const auto c = channel_index(obs, row[c_ch], where);
            static_seen[it->second][c] = true;
            for (std::size_t v = 0; v < sta.size(); ++v) {
                s.stat(c, v) = parse_value(sta[v], row[c_var[v]], where);
            }
        }
        for (std::size_t i = 0; i < data.series.size(); ++i) {
            for (std::size_t c = 0; c < obs.size(); ++c) {
                if (!static_seen[i][c]) {
                    throw SchemaError("static.csv: series '" + data.series[i].id + "' has no row for channel '" +
                                      obs[c].name + "'");
                }
            }
        }
    }
    auto series_of = [&](const std::string& id, const std::string& where) -> RawSeries& {
        auto it = index.find(id);
        if (it == index.end()) {
            throw SchemaError(where + ": series '" + id + "' not declared in static.csv");
        }
        return data.series[it->second];
    };

    const Table ob = load_table(dir / "observed.csv");
    {
        const auto c_id = ob.column("series_id");
        const auto c_ts = ob.column("timestamp");
        std::vector<std::size_t> c_var;
        for (const auto& v : obs) c_var.push_back(ob.column(v.name));
        for (std::size_t r = 0; r < ob.rows.size(); ++r) {
            const auto& row = ob.rows[r];
            const std::string where = "observed.csv line " + std::to_string(r + 2);
            auto& s = series_of(row[c_id], where);
            s.timestamps.push_back(parse_iso8601(row[c_ts]));
            for (std::size_t c = 0; c < obs.size(); ++c) {
                s.observed.push_back(parse_value(obs[c], row[c_var[c]], where));
            }
        }
    }
    for (auto& s : data.series) {
        s.tvk.assign(s.length() * s.channels * s.n_tvk, kMissing);
    }

    if (!tvk.empty()) {
        const Table tv = load_table(dir / "tvk.csv");
        const auto c_id = tv.column("series_id");
        const auto c_ts = tv.column("timestamp");
        const auto c_ch = tv.column("channel");
        std::vector<std::size_t> c_var;
        for (const auto& v : tvk) c_var.push_back(tv.column(v.name));
        std::vector<std::map<Instant, std::size_t>> position(data.series.size());
        for (std::size_t i = 0; i < data.series.size(); ++i) {
            for (std::size_t t = 0; t < data.series[i].length(); ++t) position[i][data.series[i].timestamps[t]] = t;
        }
        for (std::size_t r = 0; r < tv.rows.size(); ++r) {
            const auto& row = tv.rows[r];
            const std::string where = "tvk.csv line " + std::to_string(r + 2);
            auto& s = series_of(row[c_id], where);
            const auto& pos = position[index.at(row[c_id])];
            const Instant ts = parse_iso8601(row[c_ts]);
            auto p = pos.find(ts);
            if (p == pos.end()) {
                throw SchemaError(where + ": timestamp " + row[c_ts] + " not present in observed.csv");
            }
            const auto c = channel_index(obs, row[c_ch], where);
            for (std::size_t v = 0; v < tvk.size(); ++v) {
                s.tvk_at(p->second, c, v) = parse_value(tvk[v], row[c_var[v]], where);
            }
        }
    }

    if (fs::exists(dir / "closures.csv")) {
        const Table cl = load_table(dir / "closures.csv");
        const auto c_id = cl.column("series_id");
        const auto c_start = cl.column("start");
        const auto c_end = cl.column("end");
        for (std::size_t r = 0; r < cl.rows.size(); ++r) {
            const auto& row = cl.rows[r];
            auto& s = series_of(row[c_id], "closures.csv line " + std::to_string(r + 2));
            s.closures.emplace_back(parse_iso8601(row[c_start]), parse_iso8601(row[c_end]));
        }
    }

    for (auto& s : data.series) {
        // Missing categoricals take the reserved missing symbol.
        for (std::size_t t = 0; t < s.length(); ++t)
            for (std::size_t c = 0; c < s.channels; ++c)
                for (std::size_t v = 0; v < tvk.size(); ++v)
                    if (std::isnan(s.tvk_at(t, c, v))) s.tvk_at(t, c, v) = tvk[v].missing_value();
        for (std::size_t c = 0; c < s.channels; ++c)
            for (std::size_t v = 0; v < sta.size(); ++v)
                if (std::isnan(s.stat(c, v))) s.stat(c, v) = sta[v].missing_value();
        validate_series(s, schema);
        if (options.quantise && schema.quantise_period_seconds > 0) {
            s = quantise_series(s, schema.quantise_period_seconds);
        }
    }
    if (options.keep_fraction < 1.0) {
        data.series = filter_longest(data.series, options.keep_fraction);
    }
    return data;
}

void save_dataset(const Dataset& data, const fs::path& dir) {
    fs::create_directories(dir);
    const Schema& schema = data.schema;
    const auto obs = schema.observed();
    const auto tvk = schema.tvk();
    const auto sta = schema.statics();
    auto open = [&](const std::string& name) {
        std::ofstream out(dir / name);
        if (!out) throw IoError("cannot write " + (dir / name).string());
        return out;
    };
    {
        auto out = open("manifest.json");
        out << nlohmann::json(schema).dump(2) << '\n';
    }
    {
        auto out = open("static.csv");
        out << "series_id,channel";
        for (const auto& k : schema.key) out << ',' << k;
        for (const auto& v : sta) out << ',' << v.name;
        const bool any_end = std::any_of(data.series.begin(), data.series.end(), [](const auto& s) { return s.end_time.has_value(); });
        if (any_end) out << ',' << schema.end_time_column;
        out << '\n';
        for (const auto& s : data.series) {
            for (std::size_t c = 0; c < s.channels; ++c) {
                out << s.id << ',' << obs[c].name;
                for (const auto& k : schema.key) {
                    auto it = s.attributes.find(k);
                    out << ',' << (it == s.attributes.end() ? "" : it->second);
                }
                for (std::size_t v = 0; v < sta.size(); ++v) out << ',' << format_value(sta[v], s.stat(c, v));
                if (any_end) out << ',' << (s.end_time ? format_iso8601(*s.end_time) : "");
                out << '\n';
            }
        }
    }
    {
        auto out = open("observed.csv");
        out << "series_id,timestamp";
        for (const auto& v : obs) out << ',' << v.name;
        out << '\n';
        for (const auto& s : data.series) {
            for (std::size_t t = 0; t < s.length(); ++t) {
                out << s.id << ',' << format_iso8601(s.timestamps[t]);
                for (std::size_t c = 0; c < s.channels; ++c) out << ',' << format_value(obs[c], s.obs(t, c));
                out << '\n';
            }
        }
    }
    if (!tvk.empty()) {
        auto out = open("tvk.csv");
        out << "series_id,timestamp,channel";
        for (const auto& v : tvk) out << ',' << v.name;
        out << '\n';
        for (const auto& s : data.series) {
            for (std::size_t t = 0; t < s.length(); ++t) {
                for (std::size_t c = 0; c < s.channels; ++c) {
                    out << s.id << ',' << format_iso8601(s.timestamps[t]) << ',' << obs[c].name;
                    for (std::size_t v = 0; v < tvk.size(); ++v) out << ',' << format_value(tvk[v], s.tvk_at(t, c, v));
                    out << '\n';
                }
            }
        }
    }
    const bool any_closure = std::any_of(data.series.begin(), data.series.end(), [](const auto& s) { return !s.closures.empty(); });
    if (any_closure) {
        auto out = open("closures.csv");
        out << "series_id,start,end\n";
        for (const auto& s : data.series) {
            for (const auto& [a, b] : s.closures) out << s.id << ',' << format_iso8601(a) << ',' << format_iso8601(b) << '\n';
        }
    }
}

std::string directory_hash(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::uint64_t h = 1469598103934665603ULL;
    auto feed = [&h](const char* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(p[i]);
            h *= 1099511628211ULL;
        }
    };
    for (const auto& f : files) {
        const std::string name = f.filename().string();
        feed(name.data(), name.size() + 1);
        std::ifstream in(f, std::ios::binary);
        std::vector<char> buf(1 << 16);
        while (in) {
            in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
            feed(buf.data(), static_cast<std::size_t>(in.gcount()));
        }
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

}  // namespace mrt
