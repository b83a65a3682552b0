#include "ctg/io.hpp"

#include <charconv>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace ctg {

std::string fmt(double x) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    if (ec != std::errc())
        throw std::runtime_error("fmt: to_chars failed");
    return std::string(buf, ptr);
}

void write_text_atomic(const std::string& path, const std::string& content) {
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for write: " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, target);
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// corpus
// ---------------------------------------------------------------------------

void write_corpus(const std::string& path, const std::vector<CtgRecord>& records) {
    std::string out;
    ordered_json header;
    header["format_version"] = 1;
    header["type"] = "ctg_corpus";
    header["n_records"] = records.size();
    out += header.dump();
    out += '\n';
    for (const auto& rec : records) {
        ordered_json j;
        j["ctg_id"] = rec.ctg_id;
        j["group"] = rec.group ? "apo" : "npo";
        j["conditions"] = rec.conditions;
        j["gestational_age"] = rec.gestational_age;
        j["sample_rate"] = rec.sample_rate;
        ordered_json samples = ordered_json::array();
        for (double v : rec.fhr) {
            if (is_missing(v))
                samples.push_back(nullptr);
            else
                samples.push_back(v);
        }
        j["fhr"] = std::move(samples);
        out += j.dump();
        out += '\n';
    }
    write_text_atomic(path, out);
}

std::vector<CtgRecord> read_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open corpus: " + path);
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("corpus is empty: " + path);
    const auto header = ordered_json::parse(line);
    if (!header.contains("format_version") || header["format_version"].get<int>() != 1)
        throw std::runtime_error("corpus: unsupported format_version in " + path);
    std::vector<CtgRecord> records;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        CtgRecord rec;
        rec.ctg_id = j.at("ctg_id").get<std::string>();
        const std::string group = j.at("group").get<std::string>();
        if (group != "npo" && group != "apo")
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": bad group '" + group + "'");
        rec.group = group == "apo" ? 1 : 0;
        rec.conditions = j.at("conditions").get<std::vector<std::string>>();
        rec.gestational_age = j.at("gestational_age").get<double>();
        rec.sample_rate = j.at("sample_rate").get<double>();
        for (const auto& v : j.at("fhr")) {
            rec.fhr.push_back(v.is_null() ? missing_value() : v.get<double>());
        }
        records.push_back(std::move(rec));
    }
    return records;
}

// ---------------------------------------------------------------------------
// segments
// ---------------------------------------------------------------------------

const CaseInfo* SegmentSet::find_case(const std::string& ctg_id) const {
    for (const auto& c : cases)
        if (c.ctg_id == ctg_id) return &c;
    return nullptr;
}

namespace {

template <typename T>
void put_raw(std::string& out, const T& v) {
    const char* p = reinterpret_cast<const char*>(&v);
    out.append(p, sizeof(T));
}

template <typename T>
T take_raw(const std::string& in, std::size_t& off) {
    if (off + sizeof(T) > in.size())
        throw std::runtime_error("segment file truncated");
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

}  // namespace

void write_segments(const std::string& path, const SegmentSet& set) {
    ordered_json header;
    header["format_version"] = 1;
    header["type"] = "fhr_segments";
    header["segment_len"] = kSegmentLen;
    header["sample_rate"] = kSampleRate;
    header["segment_count"] = set.segments.size();
    ordered_json cases = ordered_json::array();
    for (const auto& c : set.cases) {
        ordered_json cj;
        cj["ctg_id"] = c.ctg_id;
        cj["label"] = c.label;
        cj["conditions"] = c.conditions;
        cases.push_back(std::move(cj));
    }
    header["cases"] = std::move(cases);

    std::string out = header.dump();
    out += '\n';
    for (const auto& seg : set.segments) {
        if (static_cast<int>(seg.values.size()) != kSegmentLen ||
            static_cast<int>(seg.mask.size()) != kSegmentLen)
            throw std::invalid_argument("write_segments: segment has wrong length");
        put_raw(out, static_cast<std::uint32_t>(seg.ctg_id.size()));
        out += seg.ctg_id;
        put_raw(out, seg.start_offset);
        put_raw(out, static_cast<std::uint8_t>(seg.label));
        for (double v : seg.values) put_raw(out, v);
        for (Mask m : seg.mask) put_raw(out, static_cast<std::uint8_t>(m));
    }
    write_text_atomic(path, out);
}

SegmentSet read_segments(const std::string& path) {
    const std::string blob = read_text(path);
    const std::size_t nl = blob.find('\n');
    if (nl == std::string::npos) throw std::runtime_error("segment file has no header: " + path);
    const auto header = ordered_json::parse(blob.substr(0, nl));
    if (header.at("format_version").get<int>() != 1)
        throw std::runtime_error("segments: unsupported format_version in " + path);
    if (header.at("segment_len").get<int>() != kSegmentLen)
        throw std::runtime_error("segments: unexpected segment_len in " + path);

    SegmentSet set;
    for (const auto& cj : header.at("cases")) {
        CaseInfo c;
        c.ctg_id = cj.at("ctg_id").get<std::string>();
        c.label = cj.at("label").get<int>();
        c.conditions = cj.at("conditions").get<std::vector<std::string>>();
        set.cases.push_back(std::move(c));
    }

    const std::size_t count = header.at("segment_count").get<std::size_t>();
    std::size_t off = nl + 1;
    for (std::size_t i = 0; i < count; ++i) {
        FhrSegment seg;
        const auto id_len = take_raw<std::uint32_t>(blob, off);
        if (off + id_len > blob.size()) throw std::runtime_error("segment file truncated");
        seg.ctg_id.assign(blob, off, id_len);
        off += id_len;
        seg.start_offset = take_raw<double>(blob, off);
        seg.label = take_raw<std::uint8_t>(blob, off);
        seg.values.resize(kSegmentLen);
        for (double& v : seg.values) v = take_raw<double>(blob, off);
        seg.mask.resize(kSegmentLen);
        for (Mask& m : seg.mask) m = static_cast<Mask>(take_raw<std::uint8_t>(blob, off));
        set.segments.push_back(std::move(seg));
    }
    if (off != blob.size())
        throw std::runtime_error("segment file has trailing bytes: " + path);
    return set;
}

// ---------------------------------------------------------------------------
// sidecars
// ---------------------------------------------------------------------------

void write_splits(const std::string& path, const std::map<std::string, Split>& splits) {
    ordered_json j;
    j["format_version"] = 1;
    ordered_json m;
    for (const auto& [id, s] : splits) m[id] = split_name(s);
    j["splits"] = std::move(m);
    write_text_atomic(path, j.dump(2) + "\n");
}

std::map<std::string, Split> read_splits(const std::string& path) {
    const auto j = ordered_json::parse(read_text(path));
    if (j.at("format_version").get<int>() != 1)
        throw std::runtime_error("splits: unsupported format_version in " + path);
    std::map<std::string, Split> out;
    for (const auto& [id, name] : j.at("splits").items()) {
        const std::string s = name.get<std::string>();
        if (s == "train")
            out[id] = Split::TRAIN;
        else if (s == "val")
            out[id] = Split::VAL;
        else if (s == "test")
            out[id] = Split::TEST;
        else
            throw std::runtime_error("splits: bad split name '" + s + "'");
    }
    return out;
}

void write_norm_stats(const std::string& path, const NormStats& stats) {
    ordered_json j;
    j["format_version"] = 1;
    j["mean"] = stats.mean;
    j["sd"] = stats.sd;
    write_text_atomic(path, j.dump(2) + "\n");
}

NormStats read_norm_stats(const std::string& path) {
    const auto j = ordered_json::parse(read_text(path));
    if (j.at("format_version").get<int>() != 1)
        throw std::runtime_error("norm_stats: unsupported format_version in " + path);
    NormStats s;
    s.mean = j.at("mean").get<double>();
    s.sd = j.at("sd").get<double>();
    return s;
}

// ---------------------------------------------------------------------------
// features
// ---------------------------------------------------------------------------

void write_features_csv(const std::string& path, const std::vector<FeatureRow>& rows) {
    std::string out = "ctg_id,start_offset,label";
    for (const auto& name : feature_names()) out += "," + name;
    out += '\n';
    for (const auto& r : rows) {
        out += r.ctg_id + "," + fmt(r.start_offset) + "," + std::to_string(r.label);
        for (double v : r.values) out += "," + fmt(v);
        out += '\n';
    }
    write_text_atomic(path, out);
}

std::vector<FeatureRow> read_features_csv(const std::string& path) {
    std::istringstream in(read_text(path));
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("features csv empty: " + path);
    std::vector<FeatureRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> parts;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) parts.push_back(cell);
        if (parts.size() != 3 + feature_names().size())
            throw std::runtime_error("features csv: bad column count in " + path);
        FeatureRow r;
        r.ctg_id = parts[0];
        r.start_offset = std::stod(parts[1]);
        r.label = std::stoi(parts[2]);
        for (std::size_t i = 0; i < r.values.size(); ++i) r.values[i] = std::stod(parts[3 + i]);
        rows.push_back(std::move(r));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// resolved config
// ---------------------------------------------------------------------------

void write_resolved_config(const std::string& out_dir,
                           const std::map<std::string, std::string>& resolved) {
    std::string out;
    for (const auto& [k, v] : resolved) out += k + " = " + v + "\n";
    write_text_atomic((fs::path(out_dir) / "resolved_config.txt").string(), out);
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    if (ckpt.param_names.size() != ckpt.params.size())
        throw std::invalid_argument("save_checkpoint: name/param count mismatch");
    ordered_json header;
    header["format_version"] = 1;
    header["type"] = "ctg_checkpoint";
    ordered_json cfg;
    for (const auto& [k, v] : ckpt.config) cfg[k] = v;
    header["config"] = std::move(cfg);
    header["norm"] = {{"mean", ckpt.norm.mean}, {"sd", ckpt.norm.sd}};
    ordered_json tr;
    for (const auto& [k, v] : ckpt.training) tr[k] = v;
    header["training"] = std::move(tr);

    std::size_t offset = 0;
    ordered_json params = ordered_json::array();
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
        const auto& a = ckpt.params[i];
        ordered_json pj;
        pj["name"] = ckpt.param_names[i];
        pj["rows"] = a.rows;
        pj["cols"] = a.cols;
        pj["offset"] = offset;
        params.push_back(std::move(pj));
        offset += a.size();
    }
    header["params"] = std::move(params);
    header["blob_len"] = offset;

    std::string out = header.dump();
    out += '\n';
    out.reserve(out.size() + offset * sizeof(double));
    for (const auto& a : ckpt.params) {
        const char* p = reinterpret_cast<const char*>(a.data.data());
        out.append(p, a.size() * sizeof(double));
    }
    write_text_atomic(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
    const std::string blob = read_text(path);
    const std::size_t nl = blob.find('\n');
    if (nl == std::string::npos) throw std::runtime_error("checkpoint has no header: " + path);
    const auto header = ordered_json::parse(blob.substr(0, nl));
    if (header.at("format_version").get<int>() != 1)
        throw std::runtime_error("checkpoint: unsupported format_version in " + path);

    Checkpoint ckpt;
    for (const auto& [k, v] : header.at("config").items())
        ckpt.config[k] = v.get<std::string>();
    ckpt.norm.mean = header.at("norm").at("mean").get<double>();
    ckpt.norm.sd = header.at("norm").at("sd").get<double>();
    for (const auto& [k, v] : header.at("training").items())
        ckpt.training[k] = v.get<std::string>();

    const std::size_t blob_len = header.at("blob_len").get<std::size_t>();
    if (blob.size() - nl - 1 != blob_len * sizeof(double))
        throw std::runtime_error("checkpoint blob length mismatch: " + path);
    const char* base = blob.data() + nl + 1;
    for (const auto& pj : header.at("params")) {
        ckpt.param_names.push_back(pj.at("name").get<std::string>());
        const int rows = pj.at("rows").get<int>();
        const int cols = pj.at("cols").get<int>();
        const std::size_t offset = pj.at("offset").get<std::size_t>();
        ad::Array<double> a(rows, cols);
        if (offset + a.size() > blob_len)
            throw std::runtime_error("checkpoint param out of range: " + path);
        std::memcpy(a.data.data(), base + offset * sizeof(double), a.size() * sizeof(double));
        ckpt.params.push_back(std::move(a));
    }
    return ckpt;
}

}  // namespace ctg
