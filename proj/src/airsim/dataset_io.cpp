#include <json.hpp>

#include "beamcast/airsim/scene.hpp"
#include "beamcast/binary_io.hpp"

namespace beamcast::airsim {

namespace {

constexpr int kFormatVersion = 1;

std::size_t record_bytes(const DatasetManifest& m)
{
    return static_cast<std::size_t>(3) * m.image_height * m.image_width * 4 + 8 * 4 + 2;
}

} // namespace

std::string manifest_text(const DatasetManifest& m)
{
    nlohmann::ordered_json j;
    j["format_version"] = m.format_version;
    j["n"] = m.n;
    j["image_height"] = m.image_height;
    j["image_width"] = m.image_width;
    j["num_beams"] = m.num_beams;
    j["num_antennas"] = m.num_antennas;
    j["num_subcarriers"] = m.num_subcarriers;
    j["seed"] = m.seed;
    return j.dump(2) + "\n";
}

DatasetManifest read_manifest(const std::filesystem::path& dir)
{
    const auto bytes = io::read_file(dir / "manifest");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("dataset manifest is not valid JSON: " + std::string(e.what()));
    }
    DatasetManifest m;
    try {
        m.format_version = j.at("format_version").get<int>();
        m.n = j.at("n").get<std::uint64_t>();
        m.image_height = j.at("image_height").get<int>();
        m.image_width = j.at("image_width").get<int>();
        m.num_beams = j.at("num_beams").get<int>();
        m.num_antennas = j.at("num_antennas").get<int>();
        m.num_subcarriers = j.at("num_subcarriers").get<int>();
        m.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("dataset manifest field error: " + std::string(e.what()));
    }
    if (m.format_version != kFormatVersion) {
        throw FormatError("unsupported dataset format version " + std::to_string(m.format_version));
    }
    if (m.n < 1 || m.image_height < 1 || m.image_width < 1 || m.num_beams < 1 || m.num_beams > 65535) {
        throw FormatError("dataset manifest has out-of-range values");
    }
    return m;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& data)
{
    std::filesystem::create_directories(dir);
    const DatasetManifest& m = data.manifest;
    io::ByteWriter w;
    w.bytes().reserve(record_bytes(m) * data.samples.size());
    for (const auto& s : data.samples) {
        if (s.image.height != m.image_height || s.image.width != m.image_width) {
            throw DimensionError("write_dataset: sample image size differs from the manifest");
        }
        for (float p : s.image.pixels) {
            w.f32(p);
        }
        for (float f : s.features) {
            w.f32(f);
        }
        w.u16(s.label);
    }
    io::write_file_atomic(dir / "samples.bin", w.bytes());
    io::write_file_atomic(dir / "manifest", manifest_text(m));
}

Dataset read_dataset(const std::filesystem::path& dir)
{
    Dataset data;
    data.manifest = read_manifest(dir);
    const DatasetManifest& m = data.manifest;
    const auto bytes = io::read_file(dir / "samples.bin");
    if (bytes.size() != record_bytes(m) * m.n) {
        throw FormatError("samples.bin holds " + std::to_string(bytes.size()) + " bytes, manifest implies " +
                          std::to_string(record_bytes(m) * m.n));
    }
    io::ByteReader r(bytes);
    data.samples.resize(m.n);
    for (auto& s : data.samples) {
        s.image = pipeline::Image(m.image_height, m.image_width);
        for (auto& p : s.image.pixels) {
            p = r.f32();
        }
        for (auto& f : s.features) {
            f = r.f32();
        }
        s.label = r.u16();
        if (s.label >= m.num_beams) {
            throw FormatError("sample label " + std::to_string(s.label) + " exceeds num_beams");
        }
    }
    return data;
}

} // namespace beamcast::airsim
