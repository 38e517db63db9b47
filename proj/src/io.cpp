#include "vmc/io.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "vmc/hash.hpp"
#include "vmc/schedule.hpp"

namespace vmc {

namespace {

constexpr char kClipMagic[8] = {'V', 'M', 'C', 'C', 'L', 'I', 'P', '1'};
constexpr char kCkptMagic[8] = {'V', 'M', 'C', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

std::vector<float> matrix_to_f32_row_major(const Eigen::MatrixXd& m) {
    std::vector<float> out(static_cast<std::size_t>(m.rows()) *
                           static_cast<std::size_t>(m.cols()));
    std::size_t k = 0;
    for (long r = 0; r < m.rows(); ++r)
        for (long c = 0; c < m.cols(); ++c) out[k++] = static_cast<float>(m(r, c));
    return out;
}

Eigen::MatrixXd matrix_from_f32_row_major(const std::vector<float>& data,
                                          long rows, long cols) {
    Eigen::MatrixXd m(rows, cols);
    std::size_t k = 0;
    for (long r = 0; r < rows; ++r)
        for (long c = 0; c < cols; ++c) m(r, c) = static_cast<double>(data[k++]);
    return m;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot open '" + path + "' for writing");
    return os;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open '" + path + "' for reading");
    return is;
}

}  // namespace

void save_clip(const std::string& path, const VideoTensor& v,
               const nlohmann::json& header_extra) {
    nlohmann::json header = header_extra.is_object() ? header_extra
                                                     : nlohmann::json::object();
    header["N"] = v.frame_count();
    header["d"] = v.frame_dim();
    header["height"] = v.height;
    header["width"] = v.width;
    const std::string htext = header.dump();

    auto os = open_out(path);
    os.write(kClipMagic, 8);
    write_u64(os, htext.size());
    os.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    const auto payload = matrix_to_f32_row_major(v.frames);
    os.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!os) throw CheckpointError("short write to '" + path + "'");
}

ClipFile load_clip(const std::string& path) {
    auto is = open_in(path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kClipMagic, 8) != 0)
        throw CheckpointError("'" + path + "' is not a clip file");
    const auto hlen = read_u64(is);
    std::string htext(hlen, '\0');
    is.read(htext.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(htext);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("bad clip header in '" + path + "': " + e.what());
    }
    const long n = header.at("N").get<long>();
    const long d = header.at("d").get<long>();
    std::vector<float> payload(static_cast<std::size_t>(n * d));
    is.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!is) throw CheckpointError("truncated clip payload in '" + path + "'");
    ClipFile out;
    out.video = VideoTensor(matrix_from_f32_row_major(payload, n, d),
                            header.at("height").get<int>(),
                            header.at("width").get<int>());
    out.header = std::move(header);
    return out;
}

std::string tensors_hash(const NamedTensors& tensors) {
    Fnv1a h;
    for (const auto& t : tensors.items) {
        const auto payload = matrix_to_f32_row_major(t.value);
        h.update(payload.data(), payload.size() * sizeof(float));
    }
    return h.hex();
}

std::string video_hash(const VideoTensor& v) {
    const auto payload = matrix_to_f32_row_major(v.frames);
    Fnv1a h;
    h.update(payload.data(), payload.size() * sizeof(float));
    return h.hex();
}

void save_checkpoint(const std::string& path, const NamedTensors& tensors,
                     const nlohmann::json& config,
                     const nlohmann::json& provenance) {
    nlohmann::json manifest;
    manifest["format"] = "vmc-checkpoint-v1";
    manifest["config"] = config;
    if (!provenance.empty()) manifest["provenance"] = provenance;
    manifest["tensors"] = nlohmann::json::array();
    for (const auto& t : tensors.items)
        manifest["tensors"].push_back({{"name", t.name},
                                       {"label", label_name(t.label)},
                                       {"rows", t.value.rows()},
                                       {"cols", t.value.cols()}});
    manifest["payload_hash"] = tensors_hash(tensors);
    const std::string mtext = manifest.dump();

    auto os = open_out(path);
    os.write(kCkptMagic, 8);
    write_u64(os, mtext.size());
    os.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
    for (const auto& t : tensors.items) {
        const auto payload = matrix_to_f32_row_major(t.value);
        os.write(reinterpret_cast<const char*>(payload.data()),
                 static_cast<std::streamsize>(payload.size() * sizeof(float)));
    }
    if (!os) throw CheckpointError("short write to '" + path + "'");
}

CheckpointFile load_checkpoint(const std::string& path) {
    auto is = open_in(path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kCkptMagic, 8) != 0)
        throw CheckpointError("'" + path + "' is not a checkpoint file");
    const auto mlen = read_u64(is);
    std::string mtext(mlen, '\0');
    is.read(mtext.data(), static_cast<std::streamsize>(mlen));
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mtext);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("bad checkpoint manifest in '" + path + "': " +
                              e.what());
    }

    CheckpointFile out;
    out.config = manifest.value("config", nlohmann::json::object());
    out.provenance = manifest.value("provenance", nlohmann::json::object());
    for (const auto& tj : manifest.at("tensors")) {
        const long rows = tj.at("rows").get<long>();
        const long cols = tj.at("cols").get<long>();
        std::vector<float> payload(static_cast<std::size_t>(rows * cols));
        is.read(reinterpret_cast<char*>(payload.data()),
                static_cast<std::streamsize>(payload.size() * sizeof(float)));
        if (!is)
            throw CheckpointError("truncated checkpoint payload in '" + path + "'");
        out.tensors.items.push_back(
            {tj.at("name").get<std::string>(),
             label_from_name(tj.at("label").get<std::string>()),
             matrix_from_f32_row_major(payload, rows, cols)});
    }
    out.payload_hash = manifest.at("payload_hash").get<std::string>();
    const std::string actual = tensors_hash(out.tensors);
    if (actual != out.payload_hash)
        throw CheckpointError("checkpoint hash mismatch in '" + path +
                              "': manifest says " + out.payload_hash +
                              ", payload is " + actual);
    return out;
}

nlohmann::json schedule_to_json(const NoiseSchedule& s) {
    nlohmann::json j;
    j["T"] = s.T;
    j["beta"] = std::vector<double>(s.beta.data(), s.beta.data() + s.T);
    return j;
}

NoiseSchedule schedule_from_json(const nlohmann::json& j) {
    require_config(j.contains("T") && j.contains("beta"),
                   "schedule JSON needs T and beta");
    auto beta = j.at("beta").get<std::vector<double>>();
    require_config(static_cast<int>(beta.size()) == j.at("T").get<int>(),
                   "schedule JSON: beta length != T");
    return make_schedule_from_betas(std::move(beta));
}

void write_pgm(const std::string& path, const Eigen::MatrixXd& image) {
    auto os = open_out(path);
    os << "P5\n" << image.cols() << " " << image.rows() << "\n255\n";
    for (long r = 0; r < image.rows(); ++r)
        for (long c = 0; c < image.cols(); ++c) {
            const double v = std::min(1.0, std::max(0.0, image(r, c)));
            os.put(static_cast<char>(static_cast<unsigned char>(v * 255.0 + 0.5)));
        }
}

Eigen::MatrixXd frame_strip(const VideoTensor& v) {
    const int n = v.frame_count();
    const long cols = static_cast<long>(n) * (v.width + 1) - 1;
    Eigen::MatrixXd img = Eigen::MatrixXd::Ones(v.height, cols);
    for (int f = 0; f < n; ++f)
        for (int r = 0; r < v.height; ++r)
            for (int c = 0; c < v.width; ++c)
                img(r, f * (v.width + 1) + c) = v.pixel(f, r, c);
    return img;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot open '" + path + "' for writing");
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open '" + path + "' for reading");
    std::string s((std::istreambuf_iterator<char>(is)),
                  std::istreambuf_iterator<char>());
    return s;
}

}  // namespace vmc
