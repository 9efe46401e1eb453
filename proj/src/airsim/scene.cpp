#include "beamcast/airsim/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

#include "beamcast/errors.hpp"

namespace beamcast::airsim {

namespace {

enum StreamKey : std::uint64_t { kFlight = 1, kChannel = 2, kSensor = 3, kRender = 4 };

void require(bool ok, const std::string& message)
{
    if (!ok) {
        throw ConfigError(message);
    }
}

} // namespace

double Camera::focal_px(int width) const
{
    return 0.5 * width / std::tan(0.5 * horizontal_fov);
}

double Camera::depth(const Eigen::Vector3d& point) const
{
    const Eigen::Vector3d forward(0.0, std::cos(tilt), std::sin(tilt));
    return (point - position).dot(forward);
}

Eigen::Vector2d Camera::project(const Eigen::Vector3d& point, int width, int height) const
{
    const Eigen::Vector3d d = point - position;
    const Eigen::Vector3d forward(0.0, std::cos(tilt), std::sin(tilt));
    const Eigen::Vector3d up(0.0, -std::sin(tilt), std::cos(tilt));
    const double z = d.dot(forward);
    if (!(z > 1e-6)) {
        throw FrustumError("UAV is behind the camera");
    }
    const double f = focal_px(width);
    const double u = 0.5 * (width - 1) + f * d.x() / z;
    const double v = 0.5 * (height - 1) - f * d.dot(up) / z;
    return {u, v};
}

void RenderConfig::validate() const
{
    require(blob_radius_m > 0.0, "scene.render.blob_radius_m must be positive");
    require(blob_peak >= 0.0 && blob_peak <= 1.0, "scene.render.blob_peak must lie in [0, 1]");
    require(noise_std >= 0.0, "scene.render.noise_std must be non-negative");
    require(illumination_jitter >= 0.0 && illumination_jitter < 1.0,
            "scene.render.illumination_jitter must lie in [0, 1)");
    for (int c = 0; c < 3; ++c) {
        require(sky_top[c] >= 0.0 && sky_top[c] <= 1.0 && sky_bottom[c] >= 0.0 && sky_bottom[c] <= 1.0 &&
                    uav_color[c] >= 0.0 && uav_color[c] <= 1.0,
                "scene.render colors must lie in [0, 1]");
    }
}

void TrajectoryConfig::validate() const
{
    require(azimuth_max >= 0.0 && azimuth_max < std::numbers::pi / 2,
            "scene.trajectory.azimuth_max must lie in [0, pi/2)");
    require(range_min > 0.0 && range_max >= range_min, "scene.trajectory range bounds are invalid");
    require(altitude_min > 0.0 && altitude_max >= altitude_min, "scene.trajectory altitude bounds are invalid");
    require(samples_per_flight >= 1, "scene.trajectory.samples_per_flight must be >= 1");
    require(time_step > 0.0, "scene.trajectory.time_step must be positive");
}

void SensorNoise::validate() const
{
    require(position_std >= 0.0 && velocity_std >= 0.0 && attitude_std >= 0.0,
            "scene.noise standard deviations must be non-negative");
}

void SceneConfig::validate() const
{
    require(image_size >= 16 && image_size % 16 == 0, "scene.image_size must be a positive multiple of 16");
    require(camera.horizontal_fov > 0.0 && camera.horizontal_fov < std::numbers::pi,
            "scene.camera.horizontal_fov must lie in (0, pi)");
    render.validate();
    trajectory.validate();
    noise.validate();
}

UavState trajectory_state(const TrajectoryConfig& cfg, std::uint64_t seed, std::uint64_t index)
{
    const auto per_flight = static_cast<std::uint64_t>(cfg.samples_per_flight);
    const std::uint64_t flight = index / per_flight;
    const std::uint64_t step = index % per_flight;

    Rng rng = Rng::derived(seed, {kFlight, flight});
    const double az0 = rng.uniform(-cfg.azimuth_max, cfg.azimuth_max);
    const double az1 = rng.uniform(-cfg.azimuth_max, cfg.azimuth_max);
    const double r0 = rng.uniform(cfg.range_min, cfg.range_max);
    const double r1 = rng.uniform(cfg.range_min, cfg.range_max);
    const double z0 = rng.uniform(cfg.altitude_min, cfg.altitude_max);
    const double z1 = rng.uniform(cfg.altitude_min, cfg.altitude_max);

    const double s = per_flight > 1 ? static_cast<double>(step) / static_cast<double>(per_flight - 1) : 0.0;
    const double duration = per_flight > 1 ? cfg.time_step * static_cast<double>(per_flight - 1) : 0.0;
    const double az = az0 + (az1 - az0) * s;
    const double r = r0 + (r1 - r0) * s;
    const double z = z0 + (z1 - z0) * s;

    UavState uav;
    uav.position = {r * std::sin(az), r * std::cos(az), z};
    uav.time_index = step;
    if (duration > 0.0) {
        const double dr = r1 - r0, daz = az1 - az0;
        uav.velocity = Eigen::Vector3d(dr * std::sin(az) + r * std::cos(az) * daz,
                                       dr * std::cos(az) - r * std::sin(az) * daz, z1 - z0) /
                       duration;
        const double ground_speed = std::hypot(uav.velocity.x(), uav.velocity.y());
        if (uav.velocity.norm() > 0.0) {
            uav.attitude = {std::atan2(uav.velocity.z(), ground_speed), std::atan2(uav.velocity.x(), uav.velocity.y())};
        }
    }
    return uav;
}

pipeline::Image render_image(const UavState& uav, const Camera& camera, const RenderConfig& render, int height,
                             int width, Rng& rng)
{
    const Eigen::Vector2d centre = camera.project(uav.position, width, height);
    const double sigma = render.blob_radius_m * camera.focal_px(width) / camera.depth(uav.position);
    const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
    const double illumination = 1.0 + rng.uniform(-render.illumination_jitter, render.illumination_jitter);

    pipeline::Image img(height, width);
    for (int y = 0; y < height; ++y) {
        const double t = height > 1 ? static_cast<double>(y) / (height - 1) : 0.0;
        const double dy2 = (y - centre.y()) * (y - centre.y());
        for (int x = 0; x < width; ++x) {
            const double dx = x - centre.x();
            const double alpha = render.blob_peak * std::exp(-(dx * dx + dy2) * inv_two_var);
            for (int c = 0; c < 3; ++c) {
                const double sky = illumination * (render.sky_top[c] * (1.0 - t) + render.sky_bottom[c] * t);
                double value = sky * (1.0 - alpha) + render.uav_color[c] * alpha;
                if (render.noise_std > 0.0) {
                    value += render.noise_std * rng.normal();
                }
                img.at(c, y, x) = static_cast<float>(std::clamp(value, 0.0, 1.0));
            }
        }
    }
    return img;
}

std::array<float, 8> sense(const UavState& uav, const SensorNoise& noise, Rng& rng)
{
    std::array<double, 8> v{uav.position.x(), uav.position.y(), uav.position.z(), uav.velocity.x(),
                            uav.velocity.y(), uav.velocity.z(), uav.attitude[0],  uav.attitude[1]};
    const double stds[8] = {noise.position_std, noise.position_std, noise.position_std, noise.velocity_std,
                            noise.velocity_std, noise.velocity_std, noise.attitude_std, noise.attitude_std};
    std::array<float, 8> out{};
    for (std::size_t i = 0; i < 8; ++i) {
        const double n = rng.normal();
        out[i] = static_cast<float>(stds[i] > 0.0 ? v[i] + stds[i] * n : v[i]);
    }
    return out;
}

Dataset generate_dataset(std::uint64_t n, const SceneConfig& scene, const RadioConfig& radio, std::uint64_t seed,
                         unsigned threads)
{
    if (n < 1) {
        throw ConfigError("samples must be >= 1");
    }
    scene.validate();
    radio.validate();
    const BeamCodebook codebook = dft_codebook(radio.num_antennas, radio.num_beams);

    Dataset data;
    data.manifest.n = n;
    data.manifest.image_height = scene.image_size;
    data.manifest.image_width = scene.image_size;
    data.manifest.num_beams = radio.num_beams;
    data.manifest.num_antennas = radio.num_antennas;
    data.manifest.num_subcarriers = radio.num_subcarriers;
    data.manifest.seed = seed;
    data.samples.resize(n);

    auto build = [&](std::uint64_t i) {
        const UavState uav = trajectory_state(scene.trajectory, seed, i);
        Rng channel_rng = Rng::derived(seed, {kChannel, i});
        Rng sensor_rng = Rng::derived(seed, {kSensor, i});
        Rng render_rng = Rng::derived(seed, {kRender, i});
        const ChannelState ch = make_channel(uav, scene.bs_position, radio, channel_rng);
        Sample& s = data.samples[i];
        s.label = static_cast<std::uint16_t>(optimal_beam(ch, codebook, radio));
        s.features = sense(uav, scene.noise, sensor_rng);
        s.image = render_image(uav, scene.camera, scene.render, scene.image_size, scene.image_size, render_rng);
    };

    threads = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(std::min<std::uint64_t>(n, 64))));
    if (threads == 1) {
        for (std::uint64_t i = 0; i < n; ++i) {
            build(i);
        }
        return data;
    }
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> workers;
        for (unsigned w = 0; w < threads; ++w) {
            workers.emplace_back([&, w] {
                try {
                    for (std::uint64_t i = w; i < n; i += threads) {
                        build(i);
                    }
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
    return data;
}

std::vector<std::uint64_t> label_histogram(const Dataset& data)
{
    std::vector<std::uint64_t> hist(static_cast<std::size_t>(data.manifest.num_beams), 0);
    for (const auto& s : data.samples) {
        ++hist.at(s.label);
    }
    return hist;
}

} // namespace beamcast::airsim
