#include "beamcast/cli/config.hpp"

#include <set>

#include "beamcast/binary_io.hpp"
#include "beamcast/errors.hpp"

namespace beamcast::cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Walks one JSON object, recording which keys were consumed.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) {
            throw ConfigError(name() + ": expected an object");
        }
    }

    void read(const char* key, int& out) { read_with(key, out, "an integer", [](const json& v) { return v.is_number_integer(); }); }
    void read(const char* key, double& out) { read_with(key, out, "a number", [](const json& v) { return v.is_number(); }); }
    void read(const char* key, bool& out) { read_with(key, out, "a boolean", [](const json& v) { return v.is_boolean(); }); }
    void read(const char* key, std::string& out) { read_with(key, out, "a string", [](const json& v) { return v.is_string(); }); }

    void read(const char* key, std::uint64_t& out)
    {
        read_with(key, out, "a non-negative integer", [](const json& v) {
            return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
        });
    }

    template <typename T, std::size_t N>
    void read(const char* key, std::array<T, N>& out)
    {
        if (!take(key)) {
            return;
        }
        const json& v = j_.at(key);
        if (!v.is_array() || v.size() != N) {
            throw ConfigError(field(key) + ": expected an array of " + std::to_string(N) + " values");
        }
        for (std::size_t i = 0; i < N; ++i) {
            const bool ok = std::is_integral_v<T> ? v[i].is_number_integer() : v[i].is_number();
            if (!ok) {
                throw ConfigError(field(key) + "[" + std::to_string(i) + "]: expected a number");
            }
            out[i] = v[i].get<T>();
        }
    }

    void read(const char* key, std::vector<int>& out)
    {
        if (!take(key)) {
            return;
        }
        const json& v = j_.at(key);
        if (!v.is_array()) {
            throw ConfigError(field(key) + ": expected an array of integers");
        }
        out.clear();
        for (const auto& e : v) {
            if (!e.is_number_integer()) {
                throw ConfigError(field(key) + ": expected an array of integers");
            }
            out.push_back(e.get<int>());
        }
    }

    void read(const char* key, Eigen::Vector3d& out)
    {
        std::array<double, 3> a{out.x(), out.y(), out.z()};
        read(key, a);
        out = Eigen::Vector3d(a[0], a[1], a[2]);
    }

    /// Sub-object, or nullptr when absent.
    const json* child(const char* key) { return take(key) ? &j_.at(key) : nullptr; }

    std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const
    {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.contains(key)) {
                throw ConfigError(field(key.c_str()) + ": unknown config key");
            }
        }
    }

private:
    std::string name() const { return path_.empty() ? "config" : path_; }

    bool take(const char* key)
    {
        seen_.insert(key);
        return j_.contains(key);
    }

    template <typename T, typename Check>
    void read_with(const char* key, T& out, const char* expected, Check check)
    {
        if (!take(key)) {
            return;
        }
        const json& v = j_.at(key);
        if (!check(v)) {
            throw ConfigError(field(key) + ": expected " + expected);
        }
        try {
            out = v.get<T>();
        } catch (const json::exception&) {
            throw ConfigError(field(key) + ": value out of range");
        }
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

ordered_json vec3(const Eigen::Vector3d& v) { return ordered_json::array({v.x(), v.y(), v.z()}); }

void parse_scene(const json& j, airsim::SceneConfig& c)
{
    Section s(j, "scene");
    s.read("image_size", c.image_size);
    s.read("bs_position", c.bs_position);
    if (const json* cam = s.child("camera")) {
        Section t(*cam, "scene.camera");
        t.read("position", c.camera.position);
        t.read("tilt", c.camera.tilt);
        t.read("horizontal_fov", c.camera.horizontal_fov);
        t.finish();
    }
    if (const json* r = s.child("render")) {
        Section t(*r, "scene.render");
        t.read("sky_top", c.render.sky_top);
        t.read("sky_bottom", c.render.sky_bottom);
        t.read("uav_color", c.render.uav_color);
        t.read("blob_radius_m", c.render.blob_radius_m);
        t.read("blob_peak", c.render.blob_peak);
        t.read("noise_std", c.render.noise_std);
        t.read("illumination_jitter", c.render.illumination_jitter);
        t.finish();
    }
    if (const json* tr = s.child("trajectory")) {
        Section t(*tr, "scene.trajectory");
        t.read("azimuth_max", c.trajectory.azimuth_max);
        t.read("range_min", c.trajectory.range_min);
        t.read("range_max", c.trajectory.range_max);
        t.read("altitude_min", c.trajectory.altitude_min);
        t.read("altitude_max", c.trajectory.altitude_max);
        t.read("samples_per_flight", c.trajectory.samples_per_flight);
        t.read("time_step", c.trajectory.time_step);
        t.finish();
    }
    if (const json* n = s.child("noise")) {
        Section t(*n, "scene.noise");
        t.read("position_std", c.noise.position_std);
        t.read("velocity_std", c.noise.velocity_std);
        t.read("attitude_std", c.noise.attitude_std);
        t.finish();
    }
    s.finish();
}

void parse_radio(const json& j, airsim::RadioConfig& c)
{
    Section s(j, "radio");
    s.read("num_antennas", c.num_antennas);
    s.read("num_subcarriers", c.num_subcarriers);
    s.read("num_beams", c.num_beams);
    s.read("tx_power", c.tx_power);
    s.read("noise_var", c.noise_var);
    s.read("reference_distance", c.reference_distance);
    s.read("nlos_power_ratio", c.nlos_power_ratio);
    s.finish();
}

void parse_train_into(const json& j, const std::string& path, bool with_seed, harness::TrainConfig& c)
{
    Section s(j, path);
    s.read("epochs", c.epochs);
    s.read("batch_size", c.batch_size);
    s.read("lr", c.lr);
    s.read("milestones", c.milestones);
    s.read("decay_factor", c.decay_factor);
    if (with_seed) {
        s.read("seed", c.seed);
    }
    s.read("eval_every", c.eval_every);
    s.read("train_fraction", c.train_fraction);
    s.read("grad_clip", c.grad_clip);
    if (const json* a = s.child("augment")) {
        Section t(*a, path + ".augment");
        t.read("enabled", c.augment.enabled);
        t.read("pad", c.augment.pad);
        t.read("flip_probability", c.augment.flip_probability);
        t.finish();
    }
    s.finish();
}

ordered_json scene_json(const airsim::SceneConfig& c)
{
    ordered_json j;
    j["image_size"] = c.image_size;
    j["bs_position"] = vec3(c.bs_position);
    j["camera"] = {{"position", vec3(c.camera.position)},
                   {"tilt", c.camera.tilt},
                   {"horizontal_fov", c.camera.horizontal_fov}};
    j["render"] = {{"sky_top", c.render.sky_top},
                   {"sky_bottom", c.render.sky_bottom},
                   {"uav_color", c.render.uav_color},
                   {"blob_radius_m", c.render.blob_radius_m},
                   {"blob_peak", c.render.blob_peak},
                   {"noise_std", c.render.noise_std},
                   {"illumination_jitter", c.render.illumination_jitter}};
    j["trajectory"] = {{"azimuth_max", c.trajectory.azimuth_max},
                       {"range_min", c.trajectory.range_min},
                       {"range_max", c.trajectory.range_max},
                       {"altitude_min", c.trajectory.altitude_min},
                       {"altitude_max", c.trajectory.altitude_max},
                       {"samples_per_flight", c.trajectory.samples_per_flight},
                       {"time_step", c.trajectory.time_step}};
    j["noise"] = {{"position_std", c.noise.position_std},
                  {"velocity_std", c.noise.velocity_std},
                  {"attitude_std", c.noise.attitude_std}};
    return j;
}

ordered_json radio_json(const airsim::RadioConfig& c)
{
    ordered_json j;
    j["num_antennas"] = c.num_antennas;
    j["num_subcarriers"] = c.num_subcarriers;
    j["num_beams"] = c.num_beams;
    j["tx_power"] = c.tx_power;
    j["noise_var"] = c.noise_var;
    j["reference_distance"] = c.reference_distance;
    j["nlos_power_ratio"] = c.nlos_power_ratio;
    return j;
}

} // namespace

beamnet::ModelConfig parse_model_config(const json& j, const std::string& path)
{
    beamnet::ModelConfig c;
    Section s(j, path);
    s.read("image_size", c.image_size);
    s.read("conv_channels", c.conv_channels);
    s.read("embed_dim", c.embed_dim);
    s.read("num_heads", c.num_heads);
    s.read("cross_heads", c.cross_heads);
    s.read("num_encoder_layers", c.num_encoder_layers);
    s.read("encoder_ffn_hidden", c.encoder_ffn_hidden);
    s.read("ffn_hidden", c.ffn_hidden);
    s.read("classifier_hidden", c.classifier_hidden);
    s.read("num_beams", c.num_beams);
    s.read("dropout", c.dropout);
    s.read("scale_factor", c.scale_factor);
    s.read("per_feature_tokens", c.per_feature_tokens);
    s.finish();
    return c;
}

harness::TrainConfig parse_train_config(const json& j, const std::string& path)
{
    harness::TrainConfig c;
    parse_train_into(j, path, true, c);
    return c;
}

ordered_json to_json(const beamnet::ModelConfig& c)
{
    ordered_json j;
    j["image_size"] = c.image_size;
    j["conv_channels"] = c.conv_channels;
    j["embed_dim"] = c.embed_dim;
    j["num_heads"] = c.num_heads;
    j["cross_heads"] = c.cross_heads;
    j["num_encoder_layers"] = c.num_encoder_layers;
    j["encoder_ffn_hidden"] = c.encoder_ffn_hidden;
    j["ffn_hidden"] = c.ffn_hidden;
    j["classifier_hidden"] = c.classifier_hidden;
    j["num_beams"] = c.num_beams;
    j["dropout"] = c.dropout;
    j["scale_factor"] = c.scale_factor;
    j["per_feature_tokens"] = c.per_feature_tokens;
    return j;
}

ordered_json to_json(const harness::TrainConfig& c)
{
    ordered_json j;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["lr"] = c.lr;
    j["milestones"] = c.milestones;
    j["decay_factor"] = c.decay_factor;
    j["seed"] = c.seed;
    j["eval_every"] = c.eval_every;
    j["train_fraction"] = c.train_fraction;
    j["grad_clip"] = c.grad_clip;
    j["augment"] = {{"enabled", c.augment.enabled},
                    {"pad", c.augment.pad},
                    {"flip_probability", c.augment.flip_probability}};
    return j;
}

void RunConfig::validate() const
{
    if (samples < 1) {
        throw ConfigError("samples: must be >= 1");
    }
    scene.validate();
    radio.validate();
    model.validate();
    train.validate();
}

RunConfig parse_run_config(const json& j)
{
    RunConfig c;
    Section s(j, "");
    s.read("seed", c.seed);
    s.read("samples", c.samples);
    if (const json* v = s.child("scene")) {
        parse_scene(*v, c.scene);
    }
    if (const json* v = s.child("radio")) {
        parse_radio(*v, c.radio);
    }
    if (const json* v = s.child("model")) {
        c.model = parse_model_config(*v);
    }
    if (const json* v = s.child("train")) {
        parse_train_into(*v, "train", false, c.train);
    }
    if (const json* v = s.child("paths")) {
        Section p(*v, "paths");
        p.read("data", c.data_dir);
        p.read("out", c.out_dir);
        p.finish();
    }
    s.finish();
    c.train.seed = c.seed;
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path)
{
    const auto bytes = io::read_file(path);
    json j;
    try {
        j = json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": not valid JSON (" + e.what() + ")");
    }
    return parse_run_config(j);
}

ordered_json to_json(const RunConfig& c)
{
    ordered_json j;
    j["seed"] = c.seed;
    j["samples"] = c.samples;
    j["scene"] = scene_json(c.scene);
    j["radio"] = radio_json(c.radio);
    j["model"] = to_json(c.model);
    ordered_json train = to_json(c.train);
    train.erase("seed");
    j["train"] = train;
    j["paths"] = {{"data", c.data_dir}, {"out", c.out_dir}};
    return j;
}

} // namespace beamcast::cli
