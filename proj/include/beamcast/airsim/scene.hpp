#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "beamcast/airsim/channel.hpp"
#include "beamcast/pipeline/image.hpp"

namespace beamcast::airsim {

/// Pinhole camera mounted at the base station, looking along broadside (+y)
/// and tilted up by `tilt` radians.
struct Camera {
    Eigen::Vector3d position = Eigen::Vector3d(0.0, 0.0, 10.0);
    double tilt = 0.35;
    double horizontal_fov = 2.0; // ~110 degrees

    double focal_px(int width) const;
    /// Pixel coordinates (column u, row v) of a world point; throws FrustumError
    /// when the point is not in front of the camera.
    Eigen::Vector2d project(const Eigen::Vector3d& point, int width, int height) const;
    /// Depth of a world point along the optical axis.
    double depth(const Eigen::Vector3d& point) const;
};

struct RenderConfig {
    std::array<double, 3> sky_top{0.35, 0.55, 0.90};
    std::array<double, 3> sky_bottom{0.70, 0.80, 0.95};
    std::array<double, 3> uav_color{0.08, 0.08, 0.10};
    double blob_radius_m = 8.0; // Gaussian sigma in metres at the UAV
    double blob_peak = 0.9;     // opacity at the blob centre
    double noise_std = 0.02;
    double illumination_jitter = 0.15;

    void validate() const;
};

/// Flights sweep in azimuth/range/altitude; consecutive samples of one flight
/// are consecutive time steps.
struct TrajectoryConfig {
    double azimuth_max = 1.05; // radians either side of broadside
    double range_min = 60.0;   // horizontal distance from the base station
    double range_max = 160.0;
    double altitude_min = 30.0;
    double altitude_max = 70.0;
    int samples_per_flight = 50;
    double time_step = 0.5; // seconds between samples

    void validate() const;
};

struct SensorNoise {
    double position_std = 1.0;     // metres
    double velocity_std = 0.1;     // m/s
    double attitude_std = 0.00873; // radians (0.5 degrees)

    void validate() const;
};

struct SceneConfig {
    Eigen::Vector3d bs_position = Eigen::Vector3d(0.0, 0.0, 10.0);
    Camera camera;
    RenderConfig render;
    TrajectoryConfig trajectory;
    SensorNoise noise;
    int image_size = 64;

    void validate() const;
};

struct Sample {
    pipeline::Image image;
    std::array<float, 8> features{}; // x y z vx vy vz pitch yaw
    std::uint16_t label = 0;
};

struct DatasetManifest {
    int format_version = 1;
    std::uint64_t n = 0;
    int image_height = 0;
    int image_width = 0;
    int num_beams = 0;
    int num_antennas = 0;
    int num_subcarriers = 0;
    std::uint64_t seed = 0;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<Sample> samples;
};

/// UAV state of sample `index` (flight index / samples_per_flight, time step
/// index % samples_per_flight), noise free.
UavState trajectory_state(const TrajectoryConfig& cfg, std::uint64_t seed, std::uint64_t index);

/// Sky gradient background with a Gaussian blob at the projected UAV position.
pipeline::Image render_image(const UavState& uav, const Camera& camera, const RenderConfig& render, int height,
                             int width, Rng& rng);

/// Position, velocity and attitude with additive Gaussian sensor noise.
std::array<float, 8> sense(const UavState& uav, const SensorNoise& noise, Rng& rng);

/// Every sample draws from its own stream derived from (seed, index), so the
/// result does not depend on `threads`.
Dataset generate_dataset(std::uint64_t n, const SceneConfig& scene, const RadioConfig& radio, std::uint64_t seed,
                         unsigned threads = 1);

std::vector<std::uint64_t> label_histogram(const Dataset& data);

// Directory format: `manifest` (JSON text) + `samples.bin` (little-endian f32
// image planes, 8 f32 features, u16 label per record).
void write_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& dir);
DatasetManifest read_manifest(const std::filesystem::path& dir);
std::string manifest_text(const DatasetManifest& manifest);

} // namespace beamcast::airsim
