#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cullkit/culling.hpp"
#include "cullkit/geometry.hpp"
#include "cullkit/pnp.hpp"

namespace cullkit {

namespace fs = std::filesystem;

namespace detail {

inline std::string read_text_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::vector<std::string> split_ws(const std::string& line)
{
    std::vector<std::string> out;
    std::istringstream ss(line);
    for (std::string tok; ss >> tok;) out.push_back(tok);
    return out;
}

template <class T>
bool parse_number(std::string_view s, T& out)
{
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

inline std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

// ---------------------------------------------------------------------------
// PLY

namespace detail {

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

inline std::optional<PlyType> ply_type(const std::string& s)
{
    static const std::map<std::string, PlyType> names{
        {"char", PlyType::Int8},     {"int8", PlyType::Int8},       {"uchar", PlyType::UInt8},
        {"uint8", PlyType::UInt8},   {"short", PlyType::Int16},     {"int16", PlyType::Int16},
        {"ushort", PlyType::UInt16}, {"uint16", PlyType::UInt16},   {"int", PlyType::Int32},
        {"int32", PlyType::Int32},   {"uint", PlyType::UInt32},     {"uint32", PlyType::UInt32},
        {"float", PlyType::Float32}, {"float32", PlyType::Float32}, {"double", PlyType::Float64},
        {"float64", PlyType::Float64}};
    const auto it = names.find(s);
    if (it == names.end()) return std::nullopt;
    return it->second;
}

inline std::size_t ply_size(PlyType t)
{
    switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8: return 1;
    case PlyType::Int16:
    case PlyType::UInt16: return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
    }
    return 0;
}

inline bool ply_is_integer(PlyType t) { return t != PlyType::Float32 && t != PlyType::Float64; }

struct PlyProperty {
    std::string name;
    PlyType type = PlyType::Float32;
    bool is_list = false;
    PlyType count_type = PlyType::UInt8;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> props;
};

class BinaryReader {
public:
    BinaryReader(const std::string& data, std::size_t offset) : data_(data), pos_(offset) {}

    double read(PlyType t)
    {
        const std::size_t n = ply_size(t);
        if (pos_ + n > data_.size())
            throw Error(ErrorCode::ParseError, "PLY truncated at byte offset " + std::to_string(pos_));
        unsigned char b[8];
        std::memcpy(b, data_.data() + pos_, n);
        if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + n);
        pos_ += n;
        switch (t) {
        case PlyType::Int8: return static_cast<std::int8_t>(b[0]);
        case PlyType::UInt8: return b[0];
        case PlyType::Int16: return load<std::int16_t>(b);
        case PlyType::UInt16: return load<std::uint16_t>(b);
        case PlyType::Int32: return load<std::int32_t>(b);
        case PlyType::UInt32: return load<std::uint32_t>(b);
        case PlyType::Float32: return load<float>(b);
        case PlyType::Float64: return load<double>(b);
        }
        return 0.0;
    }
    std::size_t offset() const noexcept { return pos_; }

private:
    template <class T>
    static double load(const unsigned char* b)
    {
        T v;
        std::memcpy(&v, b, sizeof v);
        return static_cast<double>(v);
    }
    const std::string& data_;
    std::size_t pos_;
};

class AsciiReader {
public:
    AsciiReader(const std::string& data, std::size_t offset, std::size_t first_line)
        : data_(data), pos_(offset), line_(first_line)
    {
    }

    double read(PlyType t)
    {
        const std::string tok = next();
        double v = 0.0;
        if (ply_is_integer(t)) {
            long long i = 0;
            if (!parse_number(tok, i)) fail("expected an integer, got '" + tok + "'");
            v = static_cast<double>(i);
        } else if (!parse_number(tok, v)) {
            fail("expected a number, got '" + tok + "'");
        }
        return v;
    }
    /// Each element record must occupy exactly one line.
    void end_record()
    {
        while (pos_ < data_.size() && (data_[pos_] == ' ' || data_[pos_] == '\t' || data_[pos_] == '\r')) ++pos_;
        if (pos_ < data_.size() && data_[pos_] != '\n') fail("unexpected extra values");
        if (pos_ < data_.size()) {
            ++pos_;
            ++line_;
        }
    }
    [[noreturn]] void fail(const std::string& what) const
    {
        throw Error(ErrorCode::ParseError, "PLY line " + std::to_string(line_) + ": " + what);
    }

private:
    std::string next()
    {
        while (pos_ < data_.size() && (data_[pos_] == ' ' || data_[pos_] == '\t' || data_[pos_] == '\r')) ++pos_;
        if (pos_ >= data_.size()) fail("unexpected end of file");
        if (data_[pos_] == '\n') fail("record ends early");
        const std::size_t start = pos_;
        while (pos_ < data_.size() && !std::isspace(static_cast<unsigned char>(data_[pos_]))) ++pos_;
        return data_.substr(start, pos_ - start);
    }
    const std::string& data_;
    std::size_t pos_;
    std::size_t line_;
};

template <class Reader>
MeshModel read_ply_body(Reader& r, const std::vector<PlyElement>& elements, bool ascii)
{
    std::vector<Vec3> verts;
    std::vector<Face> faces;
    for (const PlyElement& e : elements) {
        int xi = -1, yi = -1, zi = -1, fi = -1;
        for (std::size_t p = 0; p < e.props.size(); ++p) {
            const auto& prop = e.props[p];
            if (e.name == "vertex" && !prop.is_list) {
                if (prop.name == "x") xi = static_cast<int>(p);
                if (prop.name == "y") yi = static_cast<int>(p);
                if (prop.name == "z") zi = static_cast<int>(p);
            }
            if (e.name == "face" && prop.is_list && (prop.name == "vertex_indices" || prop.name == "vertex_index"))
                fi = static_cast<int>(p);
        }
        if (e.name == "vertex" && (xi < 0 || yi < 0 || zi < 0))
            throw Error(ErrorCode::ParseError, "PLY vertex element lacks x/y/z");
        if (e.name == "face" && fi < 0) throw Error(ErrorCode::ParseError, "PLY face element lacks vertex_indices");

        std::vector<double> scalars(e.props.size());
        std::vector<double> list;
        for (std::size_t i = 0; i < e.count; ++i) {
            for (std::size_t p = 0; p < e.props.size(); ++p) {
                const auto& prop = e.props[p];
                if (!prop.is_list) {
                    scalars[p] = r.read(prop.type);
                    continue;
                }
                const double n = r.read(prop.count_type);
                if (n < 0 || n != std::floor(n)) throw Error(ErrorCode::ParseError, "PLY list length is invalid");
                const auto count = static_cast<std::size_t>(n);
                if (static_cast<int>(p) == fi) list.assign(count, 0.0);
                for (std::size_t j = 0; j < count; ++j) {
                    const double v = r.read(prop.type);
                    if (static_cast<int>(p) == fi) list[j] = v;
                }
            }
            if constexpr (std::is_same_v<Reader, AsciiReader>) r.end_record();
            if (e.name == "vertex") {
                verts.push_back({scalars[static_cast<std::size_t>(xi)], scalars[static_cast<std::size_t>(yi)],
                                 scalars[static_cast<std::size_t>(zi)]});
            } else if (e.name == "face") {
                if (list.size() < 3) throw Error(ErrorCode::ParseError, "PLY face " + std::to_string(i) + " has fewer than 3 vertices");
                for (double v : list)
                    if (v < 0 || v != std::floor(v)) throw Error(ErrorCode::ParseError, "PLY face index is not a non-negative integer");
                for (std::size_t j = 1; j + 1 < list.size(); ++j)
                    faces.push_back({static_cast<std::size_t>(list[0]), static_cast<std::size_t>(list[j]),
                                     static_cast<std::size_t>(list[j + 1])});
            }
        }
    }
    (void)ascii;
    return MeshModel(std::move(verts), std::move(faces));
}

} // namespace detail

/// PLY 1.0 (ASCII or binary little-endian) with vertex x/y/z and face index
/// lists. Other vertex and face properties are read and dropped; elements
/// other than vertex and face are rejected. Polygons are split into fans.
inline MeshModel load_ply(const fs::path& path)
{
    const std::string data = detail::read_text_file(path);
    std::size_t pos = 0, line_no = 0;
    auto next_line = [&]() -> std::optional<std::string> {
        if (pos >= data.size()) return std::nullopt;
        std::size_t end = data.find('\n', pos);
        if (end == std::string::npos) end = data.size();
        std::string line = data.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        pos = std::min(end + 1, data.size() + 1);
        ++line_no;
        return line;
    };
    auto header_error = [&](const std::string& what) {
        return Error(ErrorCode::ParseError, "PLY header line " + std::to_string(line_no) + ": " + what);
    };

    const auto magic = next_line();
    if (!magic || *magic != "ply") throw Error(ErrorCode::ParseError, "PLY line 1: missing 'ply' magic");
    std::vector<detail::PlyElement> elements;
    std::optional<bool> ascii;
    bool ended = false;
    while (const auto line = next_line()) {
        const auto tok = detail::split_ws(*line);
        if (tok.empty()) continue;
        if (tok[0] == "comment" || tok[0] == "obj_info") continue;
        if (tok[0] == "end_header") {
            ended = true;
            break;
        }
        if (tok[0] == "format") {
            if (tok.size() != 3 || tok[2] != "1.0") throw header_error("bad format line");
            if (tok[1] == "ascii")
                ascii = true;
            else if (tok[1] == "binary_little_endian")
                ascii = false;
            else if (tok[1] == "binary_big_endian")
                throw Error(ErrorCode::UnsupportedFormat, "big-endian PLY is not supported");
            else
                throw header_error("unknown format '" + tok[1] + "'");
        } else if (tok[0] == "element") {
            std::size_t count = 0;
            if (tok.size() != 3 || !detail::parse_number(tok[2], count)) throw header_error("bad element line");
            if (tok[1] != "vertex" && tok[1] != "face")
                throw Error(ErrorCode::UnsupportedFormat, "PLY element '" + tok[1] + "' is not supported");
            elements.push_back({tok[1], count, {}});
        } else if (tok[0] == "property") {
            if (elements.empty()) throw header_error("property before any element");
            detail::PlyProperty prop;
            if (tok.size() == 5 && tok[1] == "list") {
                const auto ct = detail::ply_type(tok[2]), vt = detail::ply_type(tok[3]);
                if (!ct || !vt || !detail::ply_is_integer(*ct)) throw header_error("bad list property types");
                prop = {tok[4], *vt, true, *ct};
            } else if (tok.size() == 3) {
                const auto t = detail::ply_type(tok[1]);
                if (!t) throw header_error("unknown property type '" + tok[1] + "'");
                prop = {tok[2], *t, false, detail::PlyType::UInt8};
            } else {
                throw header_error("bad property line");
            }
            elements.back().props.push_back(prop);
        } else {
            throw header_error("unexpected keyword '" + tok[0] + "'");
        }
    }
    if (!ended) throw Error(ErrorCode::ParseError, "PLY header has no end_header");
    if (!ascii) throw Error(ErrorCode::ParseError, "PLY header has no format line");
    if (std::none_of(elements.begin(), elements.end(), [](const auto& e) { return e.name == "vertex"; }))
        throw Error(ErrorCode::ParseError, "PLY has no vertex element");

    const std::size_t body = std::min(pos, data.size());
    if (*ascii) {
        detail::AsciiReader r(data, body, line_no + 1);
        return detail::read_ply_body(r, elements, true);
    }
    detail::BinaryReader r(data, body);
    return detail::read_ply_body(r, elements, false);
}

inline void write_ply_ascii(const MeshModel& mesh, const fs::path& path)
{
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    out << "ply\nformat ascii 1.0\nelement vertex " << mesh.vertex_count()
        << "\nproperty double x\nproperty double y\nproperty double z\nelement face " << mesh.faces().size()
        << "\nproperty list uchar int vertex_indices\nend_header\n";
    for (const Vec3& v : mesh.vertices())
        out << detail::format_double(v.x) << ' ' << detail::format_double(v.y) << ' ' << detail::format_double(v.z) << '\n';
    for (const Face& f : mesh.faces()) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

inline void write_ply_binary(const MeshModel& mesh, const fs::path& path, bool double_precision = false)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    const char* t = double_precision ? "double" : "float";
    out << "ply\nformat binary_little_endian 1.0\nelement vertex " << mesh.vertex_count() << "\nproperty " << t
        << " x\nproperty " << t << " y\nproperty " << t << " z\nelement face " << mesh.faces().size()
        << "\nproperty list uchar int vertex_indices\nend_header\n";
    auto put = [&](const auto v) {
        unsigned char b[sizeof v];
        std::memcpy(b, &v, sizeof v);
        if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof v);
        out.write(reinterpret_cast<const char*>(b), sizeof v);
    };
    for (const Vec3& v : mesh.vertices())
        for (std::size_t a = 0; a < 3; ++a) {
            if (double_precision)
                put(v[a]);
            else
                put(static_cast<float>(v[a]));
        }
    for (const Face& f : mesh.faces()) {
        put(static_cast<std::uint8_t>(3));
        for (std::size_t i : f) put(static_cast<std::int32_t>(i));
    }
}

// ---------------------------------------------------------------------------
// Pose annotations and intrinsics

inline constexpr double kSilentOrthonormalityTol = 1e-9;
inline constexpr double kQuietDriftTol = 1e-3;
inline constexpr double kMaxOrthonormalityTol = 1e-2;

struct LoadedPose {
    Pose pose;
    double orthonormality_error = 0.0;
    bool reorthonormalized = false; // drift above 1e-9 was projected away
    bool large_drift = false;       // drift above 1e-3 (still accepted up to 1e-2)
};

/// Three rows of "r r r t". Blank lines and '#' comments are ignored.
inline LoadedPose load_pose_annotation(const fs::path& path)
{
    std::istringstream in(detail::read_text_file(path));
    std::vector<std::array<double, 4>> rows;
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        const auto tok = detail::split_ws(line);
        if (tok.empty()) continue;
        if (tok.size() != 4)
            throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": expected 4 numbers");
        std::array<double, 4> row{};
        for (int i = 0; i < 4; ++i)
            if (!detail::parse_number(tok[static_cast<std::size_t>(i)], row[static_cast<std::size_t>(i)]) ||
                !std::isfinite(row[static_cast<std::size_t>(i)]))
                throw Error(ErrorCode::ParseError,
                            path.string() + ":" + std::to_string(line_no) + ": bad number '" + tok[static_cast<std::size_t>(i)] + "'");
        rows.push_back(row);
    }
    if (rows.size() != 3)
        throw Error(ErrorCode::ParseError, path.string() + ": expected 3 pose rows, found " + std::to_string(rows.size()));
    LoadedPose out;
    Mat3 r;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) r(i, j) = rows[i][j];
    out.pose.translation = {rows[0][3], rows[1][3], rows[2][3]};
    out.orthonormality_error = orthonormality_error(r);
    if (out.orthonormality_error > kMaxOrthonormalityTol || r.determinant() <= 0.0)
        throw Error(ErrorCode::InvalidRotation, path.string() + ": rotation is not orthonormal (error " +
                                                    std::to_string(out.orthonormality_error) + ")");
    if (out.orthonormality_error > kSilentOrthonormalityTol) {
        r = nearest_rotation(r);
        out.reorthonormalized = true;
        out.large_drift = out.orthonormality_error > kQuietDriftTol;
    }
    out.pose.rotation = r;
    return out;
}

inline std::string format_pose(const Pose& pose)
{
    std::string s;
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) s += detail::format_double(pose.rotation(i, j)) + ' ';
        s += detail::format_double(pose.translation[i]) + '\n';
    }
    return s;
}

inline void write_pose_annotation(const Pose& pose, const fs::path& path)
{
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    out << format_pose(pose);
}

/// key=value lines with fx, fy, cx, cy, width, height.
inline CameraIntrinsics load_intrinsics(const fs::path& path)
{
    std::istringstream in(detail::read_text_file(path));
    std::map<std::string, double> values;
    std::size_t line_no = 0;
    static const std::set<std::string> keys{"fx", "fy", "cx", "cy", "width", "height"};
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        const auto tok = detail::split_ws(line);
        if (tok.empty()) continue;
        const auto where = path.string() + ":" + std::to_string(line_no) + ": ";
        const std::string joined = [&] {
            std::string j;
            for (const auto& t : tok) j += t;
            return j;
        }();
        const auto eq = joined.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::ParseError, where + "expected key=value");
        const std::string key = joined.substr(0, eq), value = joined.substr(eq + 1);
        if (!keys.count(key)) throw Error(ErrorCode::ParseError, where + "unknown key '" + key + "'");
        if (values.count(key)) throw Error(ErrorCode::ParseError, where + "duplicate key '" + key + "'");
        double v = 0.0;
        if (!detail::parse_number(value, v) || !std::isfinite(v))
            throw Error(ErrorCode::ParseError, where + "bad value '" + value + "'");
        values[key] = v;
    }
    for (const auto& k : keys)
        if (!values.count(k)) throw Error(ErrorCode::ParseError, path.string() + ": missing key '" + k + "'");
    const double w = values["width"], h = values["height"];
    if (w != std::floor(w) || h != std::floor(h)) throw Error(ErrorCode::ParseError, path.string() + ": image size must be integral");
    try {
        return CameraIntrinsics::make(values["fx"], values["fy"], values["cx"], values["cy"], static_cast<int>(w),
                                      static_cast<int>(h));
    } catch (const Error& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
}

inline void write_intrinsics(const CameraIntrinsics& k, const fs::path& path)
{
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    out << "fx=" << detail::format_double(k.fx) << "\nfy=" << detail::format_double(k.fy)
        << "\ncx=" << detail::format_double(k.cx) << "\ncy=" << detail::format_double(k.cy) << "\nwidth=" << k.image_width
        << "\nheight=" << k.image_height << '\n';
}

// ---------------------------------------------------------------------------
// Dataset index

struct DatasetImage {
    std::string id;
    std::optional<fs::path> image; // RGB frame; optional for pose-only evaluation
    fs::path pose;
    std::string split; // "train" or "test"
};

struct DatasetClass {
    int id = 0;
    std::string name;
    fs::path mesh;
    bool symmetric = false;
    std::vector<DatasetImage> images;
};

struct DatasetIndex {
    fs::path root;
    fs::path intrinsics;
    std::vector<DatasetClass> classes;

    /// Class and image for an image id.
    std::pair<const DatasetClass*, const DatasetImage*> find_image(const std::string& image_id) const
    {
        for (const auto& c : classes)
            for (const auto& im : c.images)
                if (im.id == image_id) return {&c, &im};
        throw Error(ErrorCode::InvalidArgument, "image id '" + image_id + "' not in the dataset index");
    }
};

/// JSON index, version 1. Relative paths resolve against the index's
/// directory. Every referenced file must exist; ids must be unique.
inline DatasetIndex load_dataset_index(const fs::path& path)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
    auto fail = [&](const std::string& what) { return Error(ErrorCode::ParseError, path.string() + ": " + what); };
    try {
        if (j.value("version", 0) != 1) throw fail("unsupported or missing version (expected 1)");
        DatasetIndex idx;
        idx.root = path.parent_path();
        auto resolve = [&](const std::string& p) {
            const fs::path full = fs::path(p).is_absolute() ? fs::path(p) : idx.root / p;
            if (!fs::exists(full)) throw Error(ErrorCode::IoError, path.string() + ": referenced file missing: " + full.string());
            return full;
        };
        idx.intrinsics = resolve(j.at("intrinsics").get<std::string>());
        std::set<int> class_ids;
        std::set<std::string> image_ids;
        for (const auto& jc : j.at("classes")) {
            DatasetClass c;
            c.id = jc.at("id").get<int>();
            if (!class_ids.insert(c.id).second) throw fail("duplicate class id " + std::to_string(c.id));
            c.name = jc.value("name", std::to_string(c.id));
            c.mesh = resolve(jc.at("mesh").get<std::string>());
            c.symmetric = jc.value("symmetric", false);
            for (const auto& ji : jc.value("images", nlohmann::json::array())) {
                DatasetImage im;
                im.id = ji.at("id").get<std::string>();
                if (!image_ids.insert(im.id).second) throw fail("duplicate image id '" + im.id + "'");
                if (ji.contains("image")) im.image = resolve(ji.at("image").get<std::string>());
                im.pose = resolve(ji.at("pose").get<std::string>());
                im.split = ji.value("split", "test");
                if (im.split != "train" && im.split != "test") throw fail("split must be train or test for '" + im.id + "'");
                c.images.push_back(std::move(im));
            }
            idx.classes.push_back(std::move(c));
        }
        if (idx.classes.empty()) throw fail("no classes");
        return idx;
    } catch (const nlohmann::json::exception& e) {
        throw fail(e.what());
    }
}

// ---------------------------------------------------------------------------
// Proposal files

/// {"version": 1, "proposals": [{"keypoints": [[x, y], ...], "confidence": c,
///  "class_scores": [...], "grid": [scale, row, col]}]}. A missing "grid"
/// maps proposal i to (0, 0, i) so file order breaks confidence ties.
inline std::vector<KeypointProposal> parse_proposals(const nlohmann::json& j)
{
    if (!j.is_object() || j.value("version", 0) != 1)
        throw Error(ErrorCode::ParseError, "proposal file needs \"version\": 1");
    std::vector<KeypointProposal> out;
    try {
        const auto& arr = j.at("proposals");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const auto& jp = arr[i];
            KeypointProposal p;
            for (const auto& kp : jp.at("keypoints")) {
                if (!kp.is_array() || kp.size() != 2) throw Error(ErrorCode::ParseError, "keypoint must be [x, y]");
                p.keypoints.push_back({kp[0].get<double>(), kp[1].get<double>()});
            }
            p.raw_confidence = jp.at("confidence").get<double>();
            if (!(p.raw_confidence >= 0.0 && p.raw_confidence <= 1.0))
                throw Error(ErrorCode::ParseError, "proposal " + std::to_string(i) + ": confidence outside [0,1]");
            p.class_scores = jp.value("class_scores", std::vector<double>{});
            if (jp.contains("grid")) {
                const auto g = jp.at("grid").get<std::vector<int>>();
                if (g.size() != 3) throw Error(ErrorCode::ParseError, "grid must be [scale, row, col]");
                p.origin = {g[0], g[1], g[2]};
            } else {
                p.origin = {0, 0, static_cast<int>(i)};
            }
            if (!out.empty() && out.front().keypoints.size() != p.keypoints.size())
                throw Error(ErrorCode::ParseError, "proposals have differing keypoint counts");
            out.push_back(std::move(p));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("proposal file: ") + e.what());
    }
    return out;
}

inline std::vector<KeypointProposal> load_proposals(const fs::path& path)
{
    try {
        return parse_proposals(nlohmann::json::parse(detail::read_text_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
}

inline nlohmann::json proposals_to_json(std::span<const KeypointProposal> proposals)
{
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : proposals) {
        nlohmann::json kps = nlohmann::json::array();
        for (const auto& k : p.keypoints) kps.push_back({k.x, k.y});
        arr.push_back({{"keypoints", kps},
                       {"confidence", p.raw_confidence},
                       {"class_scores", p.class_scores},
                       {"grid", {p.origin.scale, p.origin.row, p.origin.col}}});
    }
    return {{"version", 1}, {"proposals", arr}};
}

} // namespace cullkit
