#pragma once

#include "unstable_lens/reconstructors.hpp"

#include <chrono>
#include <memory>
#include <string>

namespace ulens {

// Malformed lines, id mismatches, version or dimension disagreements, child exit.
struct BridgeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BridgeTimeout : NumericalError {
  using NumericalError::NumericalError;
};

struct BridgeHandshake {
  int version = 0;
  Eigen::Index m = 0;
  Eigen::Index n = 0;
  bool gradient_capable = false;
  std::string model;
};

inline constexpr int kBridgeProtocolVersion = 1;

// One child process speaking newline-delimited JSON over stdio. Strictly one
// request in flight; every call waits at most `timeout` for its reply.
class BridgeSession {
 public:
  BridgeSession(const std::string& command, std::chrono::milliseconds timeout = std::chrono::seconds(60));
  ~BridgeSession();
  BridgeSession(const BridgeSession&) = delete;
  BridgeSession& operator=(const BridgeSession&) = delete;

  const BridgeHandshake& handshake() const { return handshake_; }
  const std::string& command() const { return command_; }
  std::chrono::milliseconds timeout() const { return timeout_; }
  bool alive() const { return pid_ > 0; }

  Eigen::VectorXcd forward(const Eigen::VectorXcd& u);
  Eigen::VectorXcd grad_g(const Eigen::VectorXcd& u, const Eigen::VectorXcd& p);

 private:
  std::string request(const std::string& line);
  std::string read_line();
  void write_all(const std::string& bytes);
  void terminate();

  std::string command_;
  std::chrono::milliseconds timeout_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  std::uint64_t next_id_ = 0;
  BridgeHandshake handshake_;
};

// A bridged model used like any other reconstructor. The handshake dimensions
// must match the bound operator.
class BridgeReconstructor final : public Reconstructor {
 public:
  BridgeReconstructor(const std::string& command, const SamplingOperator& op,
                      std::chrono::milliseconds timeout = std::chrono::seconds(60));

  std::string name() const override { return "bridge:" + session_->handshake().model; }
  const SamplingOperator& op() const override { return *op_; }
  Image reconstruct(const MeasurementVector& y) override;
  bool gradient_capable() const override { return session_->handshake().gradient_capable; }
  MeasurementVector grad_g(const MeasurementVector& u, const Image& p) override;
  // Starts a fresh child with the same command.
  std::unique_ptr<Reconstructor> clone() const override;

  BridgeSession& session() { return *session_; }

 private:
  std::unique_ptr<SamplingOperator> op_;
  std::unique_ptr<BridgeSession> session_;
};

}  // namespace ulens
