#include "beamcast/cli/checkpoint.hpp"

#include "beamcast/binary_io.hpp"
#include "beamcast/cli/config.hpp"
#include "beamcast/errors.hpp"

namespace beamcast::cli {

namespace {

constexpr std::string_view kMagic = "BEAMCAST";

std::vector<float> to_vector(const Array<float>& a) { return {a.data(), a.data() + a.size()}; }

Array<float> to_array(const std::vector<float>& v)
{
    return Eigen::Map<const Array<float>>(v.data(), static_cast<Index>(v.size()));
}

void write_floats(io::ByteWriter& w, const std::vector<float>& v)
{
    for (float x : v) {
        w.f32(x);
    }
}

std::vector<float> read_floats(io::ByteReader& r, std::uint64_t n)
{
    if (n > r.remaining() / 4) {
        throw FormatError("checkpoint truncated");
    }
    std::vector<float> v(n);
    for (auto& x : v) {
        x = r.f32();
    }
    return v;
}

nlohmann::json parse_json(const std::string& text, const char* what)
{
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception&) {
        throw FormatError(std::string("checkpoint ") + what + " is not valid JSON");
    }
}

} // namespace

Checkpoint capture(const harness::Trainer& trainer)
{
    Checkpoint c;
    c.model = trainer.model().config();
    c.train = trainer.config();
    c.scaler = trainer.prepared().scaler;
    c.epoch = trainer.epochs_done();
    for (const auto& p : trainer.model().parameters()) {
        c.parameters.push_back({p.name, p.tensor.shape(), to_vector(p.tensor.data())});
    }
    for (const auto& bn : trainer.model().batchnorm_states()) {
        c.batchnorm.push_back({to_vector(bn.running_mean), to_vector(bn.running_var)});
    }
    const auto& adam = trainer.optimizer();
    AdamRecord a;
    a.step = adam.step;
    for (std::size_t i = 0; i < adam.first_moment.size(); ++i) {
        a.first_moment.push_back(to_vector(adam.first_moment[i]));
        a.second_moment.push_back(to_vector(adam.second_moment[i]));
    }
    c.adam = std::move(a);
    return c;
}

void restore_model(const Checkpoint& ckpt, beamnet::BeamNet<float>& model)
{
    auto& params = model.parameters();
    if (params.size() != ckpt.parameters.size()) {
        throw FormatError("checkpoint holds " + std::to_string(ckpt.parameters.size()) + " tensors, model has " +
                          std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& rec = ckpt.parameters[i];
        if (rec.name != params[i].name || rec.shape != params[i].tensor.shape()) {
            throw FormatError("checkpoint tensor " + rec.name + " does not match model tensor " + params[i].name);
        }
    }
    auto& bn = model.batchnorm_states();
    if (bn.size() != ckpt.batchnorm.size()) {
        throw FormatError("checkpoint batchnorm layer count does not match the model");
    }
    for (std::size_t i = 0; i < bn.size(); ++i) {
        if (static_cast<Index>(ckpt.batchnorm[i].mean.size()) != bn[i].running_mean.size()) {
            throw FormatError("checkpoint batchnorm layer " + std::to_string(i) + " has the wrong width");
        }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i].tensor.data() = to_array(ckpt.parameters[i].values);
    }
    for (std::size_t i = 0; i < bn.size(); ++i) {
        bn[i].running_mean = to_array(ckpt.batchnorm[i].mean);
        bn[i].running_var = to_array(ckpt.batchnorm[i].var);
    }
}

void restore_trainer(const Checkpoint& ckpt, harness::Trainer& trainer)
{
    if (!(ckpt.model == trainer.model().config())) {
        throw ConfigError("model: checkpoint model config differs from the trainer's");
    }
    if (ckpt.scaler.min != trainer.prepared().scaler.min || ckpt.scaler.max != trainer.prepared().scaler.max) {
        throw ConfigError("data: dataset differs from the one the checkpoint was trained on (scaler mismatch)");
    }
    restore_model(ckpt, trainer.model());
    auto& adam = trainer.optimizer();
    if (ckpt.adam) {
        adam.step = ckpt.adam->step;
        for (std::size_t i = 0; i < adam.first_moment.size(); ++i) {
            adam.first_moment[i] = to_array(ckpt.adam->first_moment[i]);
            adam.second_moment[i] = to_array(ckpt.adam->second_moment[i]);
        }
    }
    trainer.set_epochs_done(ckpt.epoch);
}

std::vector<std::uint8_t> serialize(const Checkpoint& c)
{
    io::ByteWriter w;
    w.raw(kMagic);
    w.u32(kCheckpointVersion);
    w.str(to_json(c.model).dump());
    w.str(to_json(c.train).dump());
    for (double v : c.scaler.min) {
        w.f64(v);
    }
    for (double v : c.scaler.max) {
        w.f64(v);
    }
    w.u32(static_cast<std::uint32_t>(c.epoch));
    w.u32(static_cast<std::uint32_t>(c.parameters.size()));
    for (const auto& t : c.parameters) {
        w.str(t.name);
        w.u32(static_cast<std::uint32_t>(t.shape.size()));
        for (Index d : t.shape) {
            w.u64(static_cast<std::uint64_t>(d));
        }
        write_floats(w, t.values);
    }
    w.u32(static_cast<std::uint32_t>(c.batchnorm.size()));
    for (const auto& bn : c.batchnorm) {
        w.u64(bn.mean.size());
        write_floats(w, bn.mean);
        write_floats(w, bn.var);
    }
    w.u8(c.adam ? 1 : 0);
    if (c.adam) {
        w.u64(c.adam->step);
        for (std::size_t i = 0; i < c.adam->first_moment.size(); ++i) {
            write_floats(w, c.adam->first_moment[i]);
            write_floats(w, c.adam->second_moment[i]);
        }
    }
    w.u64(io::fnv1a64(w.bytes().data(), w.bytes().size()));
    return std::move(w.bytes());
}

Checkpoint deserialize(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < kMagic.size() + 4 + 8 ||
        std::string_view(reinterpret_cast<const char*>(bytes.data()), kMagic.size()) != kMagic) {
        throw FormatError("not a checkpoint (bad magic)");
    }
    io::ByteReader r(bytes.data(), bytes.size());
    r.raw(kMagic.size());
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    const std::size_t body = bytes.size() - 8;
    io::ByteReader trailer(bytes.data() + body, 8);
    if (trailer.u64() != io::fnv1a64(bytes.data(), body)) {
        throw FormatError("checkpoint checksum mismatch (file truncated or corrupted)");
    }
    io::ByteReader b(bytes.data(), body);
    b.raw(kMagic.size() + 4);

    Checkpoint c;
    try {
        c.model = parse_model_config(parse_json(b.str(), "model config"));
        c.train = parse_train_config(parse_json(b.str(), "train config"));
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint config: ") + e.what());
    }
    for (double& v : c.scaler.min) {
        v = b.f64();
    }
    for (double& v : c.scaler.max) {
        v = b.f64();
    }
    c.epoch = static_cast<int>(b.u32());
    const std::uint32_t n = b.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
        TensorRecord t;
        t.name = b.str();
        const std::uint32_t rank = b.u32();
        if (rank > 8) {
            throw FormatError("checkpoint tensor " + t.name + " has rank " + std::to_string(rank));
        }
        std::uint64_t size = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint64_t dim = b.u64();
            if (dim > b.remaining()) {
                throw FormatError("checkpoint tensor " + t.name + " has an impossible shape");
            }
            t.shape.push_back(static_cast<Index>(dim));
            size *= dim;
        }
        t.values = read_floats(b, size);
        c.parameters.push_back(std::move(t));
    }
    const std::uint32_t layers = b.u32();
    for (std::uint32_t i = 0; i < layers; ++i) {
        const std::uint64_t channels = b.u64();
        BatchNormRecord bn;
        bn.mean = read_floats(b, channels);
        bn.var = read_floats(b, channels);
        c.batchnorm.push_back(std::move(bn));
    }
    if (b.u8() != 0) {
        AdamRecord a;
        a.step = b.u64();
        for (const auto& t : c.parameters) {
            a.first_moment.push_back(read_floats(b, t.values.size()));
            a.second_moment.push_back(read_floats(b, t.values.size()));
        }
        c.adam = std::move(a);
    }
    if (b.remaining() != 0) {
        throw FormatError("checkpoint has trailing bytes");
    }
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt)
{
    io::write_file_atomic(path, serialize(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    const auto bytes = io::read_file(path);
    return deserialize(bytes);
}

} // namespace beamcast::cli
