#include "beamcast/airsim/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "beamcast/errors.hpp"

namespace beamcast::airsim {

void RadioConfig::validate() const
{
    if (num_antennas < 1) {
        throw ConfigError("radio.num_antennas must be >= 1");
    }
    if (num_subcarriers < 1) {
        throw ConfigError("radio.num_subcarriers must be >= 1");
    }
    if (num_beams < 1 || num_beams > 65535) {
        throw ConfigError("radio.num_beams must lie in [1, 65535]");
    }
    if (!(tx_power > 0.0) || !std::isfinite(tx_power)) {
        throw ConfigError("radio.tx_power must be positive");
    }
    if (!(noise_var > 0.0) || !std::isfinite(noise_var)) {
        throw ConfigError("radio.noise_var must be positive");
    }
    if (!(reference_distance > 0.0)) {
        throw ConfigError("radio.reference_distance must be positive");
    }
    if (!(nlos_power_ratio >= 0.0)) {
        throw ConfigError("radio.nlos_power_ratio must be non-negative");
    }
}

Eigen::VectorXcd steering_vector(int num_antennas, double theta)
{
    const double phase_step = std::numbers::pi * std::sin(theta);
    Eigen::VectorXcd v(num_antennas);
    for (int m = 0; m < num_antennas; ++m) {
        v[m] = std::polar(1.0, phase_step * m);
    }
    return v;
}

BeamCodebook dft_codebook(int num_antennas, int num_beams)
{
    if (num_antennas < 1 || num_beams < 1) {
        throw ConfigError("codebook needs at least one antenna and one beam");
    }
    BeamCodebook cb;
    cb.beams.resize(num_antennas, num_beams);
    cb.steering_angles.resize(static_cast<std::size_t>(num_beams));
    const double norm = 1.0 / std::sqrt(static_cast<double>(num_antennas));
    for (int q = 0; q < num_beams; ++q) {
        const double s = -1.0 + 2.0 * q / num_beams;
        const double theta = std::asin(s);
        cb.steering_angles[static_cast<std::size_t>(q)] = theta;
        cb.beams.col(q) = norm * steering_vector(num_antennas, theta);
    }
    return cb;
}

double bearing(const Eigen::Vector3d& origin, const Eigen::Vector3d& target)
{
    const Eigen::Vector3d d = target - origin;
    const double horizontal = std::hypot(d.x(), d.y());
    if (horizontal == 0.0) {
        return 0.0;
    }
    return std::asin(std::clamp(d.x() / horizontal, -1.0, 1.0));
}

ChannelState make_channel(const UavState& uav, const Eigen::Vector3d& bs_position, const RadioConfig& cfg, Rng& rng)
{
    const double distance = (uav.position - bs_position).norm();
    if (!(distance > 0.0)) {
        throw GeometryError("make_channel: UAV coincides with the base station");
    }
    ChannelState ch;
    ch.path_angle = bearing(bs_position, uav.position);
    ch.path_gain = std::polar(cfg.reference_distance / distance, 2.0 * std::numbers::pi * rng.uniform());
    const Eigen::VectorXcd los = ch.path_gain * steering_vector(cfg.num_antennas, ch.path_angle).conjugate();
    ch.per_subcarrier.assign(static_cast<std::size_t>(cfg.num_subcarriers), los);

    if (cfg.nlos_power_ratio > 0.0) {
        const double nlos_angle = rng.uniform(-std::numbers::pi / 2, std::numbers::pi / 2);
        const Complex nlos_gain =
            std::polar(std::abs(ch.path_gain) * std::sqrt(cfg.nlos_power_ratio), 2.0 * std::numbers::pi * rng.uniform());
        // relative delay as a fraction of the symbol, rotating phase across subcarriers
        const double delay = rng.uniform();
        const Eigen::VectorXcd nlos = steering_vector(cfg.num_antennas, nlos_angle).conjugate();
        for (int k = 0; k < cfg.num_subcarriers; ++k) {
            const Complex rotation = std::polar(1.0, -2.0 * std::numbers::pi * delay * k / cfg.num_subcarriers);
            ch.per_subcarrier[static_cast<std::size_t>(k)] += nlos_gain * rotation * nlos;
        }
    }
    return ch;
}

Eigen::VectorXd mean_beam_gains(const ChannelState& channel, const BeamCodebook& codebook)
{
    if (channel.num_antennas() != codebook.num_antennas()) {
        throw DimensionError("channel has " + std::to_string(channel.num_antennas()) + " antennas, codebook has " +
                             std::to_string(codebook.num_antennas()));
    }
    Eigen::VectorXd gains = Eigen::VectorXd::Zero(codebook.num_beams());
    for (const auto& h : channel.per_subcarrier) {
        // row q of F^T h is h^T f_q
        gains += (codebook.beams.transpose() * h).cwiseAbs2();
    }
    return gains / static_cast<double>(channel.num_subcarriers());
}

Eigen::VectorXd beam_snr(const ChannelState& channel, const BeamCodebook& codebook, const RadioConfig& cfg)
{
    return mean_beam_gains(channel, codebook) * (cfg.tx_power / cfg.noise_var);
}

int optimal_beam(const ChannelState& channel, const BeamCodebook& codebook, const RadioConfig& cfg)
{
    if (!(cfg.tx_power > 0.0) || !(cfg.noise_var > 0.0)) {
        throw ConfigError("optimal_beam: tx_power and noise_var must be positive");
    }
    // P / sigma^2 is a positive common factor, so the argmax is taken over the
    // unscaled gains and cannot be perturbed by rounding of the product.
    const Eigen::VectorXd gains = mean_beam_gains(channel, codebook);
    int best = 0;
    for (int q = 1; q < gains.size(); ++q) {
        if (gains[q] > gains[best]) {
            best = q;
        }
    }
    return best;
}

std::vector<Complex> received_signal(const ChannelState& channel, const Eigen::VectorXcd& beam, Complex symbol,
                                     const RadioConfig& cfg, Rng& rng)
{
    if (beam.size() != channel.num_antennas()) {
        throw DimensionError("received_signal: beam length does not match the channel");
    }
    const double sigma = std::sqrt(cfg.noise_var / 2.0);
    std::vector<Complex> y;
    y.reserve(channel.per_subcarrier.size());
    for (const auto& h : channel.per_subcarrier) {
        const Complex noise(sigma * rng.normal(), sigma * rng.normal());
        y.push_back((h.array() * beam.array()).sum() * symbol + noise);
    }
    return y;
}

} // namespace beamcast::airsim
