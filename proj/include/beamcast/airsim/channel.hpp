#pragma once

#include <Eigen/Dense>

#include <complex>
#include <vector>

#include "beamcast/numcore/rng.hpp"

namespace beamcast::airsim {

using Complex = std::complex<double>;

struct RadioConfig {
    int num_antennas = 16;    // M
    int num_subcarriers = 32; // K
    int num_beams = 64;       // Q
    double tx_power = 1.0;    // P
    double noise_var = 1.0;   // sigma^2
    double reference_distance = 1.0;
    // Power of an optional random second path relative to the LoS path; 0 disables it.
    double nlos_power_ratio = 0.0;

    void validate() const;
};

/// Q unit-norm candidate beams stored as the columns of an M x Q matrix.
struct BeamCodebook {
    Eigen::MatrixXcd beams;
    std::vector<double> steering_angles;

    int num_beams() const { return static_cast<int>(beams.cols()); }
    int num_antennas() const { return static_cast<int>(beams.rows()); }
    Eigen::VectorXcd beam(int q) const { return beams.col(q); }
};

struct ChannelState {
    std::vector<Eigen::VectorXcd> per_subcarrier;
    double path_angle = 0.0;
    Complex path_gain{0.0, 0.0};

    int num_subcarriers() const { return static_cast<int>(per_subcarrier.size()); }
    int num_antennas() const { return per_subcarrier.empty() ? 0 : static_cast<int>(per_subcarrier.front().size()); }
};

struct UavState {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
    Eigen::Vector2d attitude = Eigen::Vector2d::Zero(); // pitch, yaw
    std::uint64_t time_index = 0;
};

/// Half-wavelength ULA response: element m is exp(i*pi*m*sin(theta)).
Eigen::VectorXcd steering_vector(int num_antennas, double theta);

/// Oversampled DFT grid: beam q is steering(theta_q)/sqrt(M) with
/// sin(theta_q) = -1 + 2q/Q.
BeamCodebook dft_codebook(int num_antennas, int num_beams);

/// Angle from the array broadside to `target` as seen from `origin`, in
/// [-pi/2, pi/2]. The array axis is x, broadside is +y.
double bearing(const Eigen::Vector3d& origin, const Eigen::Vector3d& target);

/// Line-of-sight channel towards the UAV. Each subcarrier vector is
/// path_gain * conj(steering(M, path_angle)), so that h^T f peaks for the beam
/// steered at path_angle. |path_gain| = reference_distance / distance.
ChannelState make_channel(const UavState& uav, const Eigen::Vector3d& bs_position, const RadioConfig& cfg, Rng& rng);

/// (1/K) * sum_k |h_k^T f_q|^2 for every beam, without the P/sigma^2 factor.
Eigen::VectorXd mean_beam_gains(const ChannelState& channel, const BeamCodebook& codebook);

/// Mean per-subcarrier SNR of every beam: mean_beam_gains * P / sigma^2.
Eigen::VectorXd beam_snr(const ChannelState& channel, const BeamCodebook& codebook, const RadioConfig& cfg);

/// Index maximizing the mean subcarrier SNR; ties go to the lowest index.
int optimal_beam(const ChannelState& channel, const BeamCodebook& codebook, const RadioConfig& cfg);

/// y_k = h_k^T f x + v_k with v_k ~ CN(0, sigma^2).
std::vector<Complex> received_signal(const ChannelState& channel, const Eigen::VectorXcd& beam, Complex symbol,
                                     const RadioConfig& cfg, Rng& rng);

} // namespace beamcast::airsim
