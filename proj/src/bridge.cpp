#include "unstable_lens/bridge.hpp"

#include "unstable_lens/io.hpp"

#include <json.hpp>

#include <cerrno>
#include <csignal>
#include <cstring>
#include <spawn.h>
#include <poll.h>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

extern char** environ;

namespace ulens {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

void close_fd(int& fd) {
  if (fd >= 0) ::close(fd);
  fd = -1;
}

json parse_reply(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw BridgeError(std::string("bridge sent malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw BridgeError("bridge reply is not a JSON object");
  return j;
}

Eigen::VectorXcd payload_of(const json& j, const char* key, Eigen::Index expected) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw BridgeError(std::string("bridge reply has no '") + key + "' payload");
  }
  const std::string bytes = base64_decode(j.at(key).get<std::string>());
  if (bytes.size() != static_cast<std::size_t>(expected) * 16) {
    throw BridgeError("bridge payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(expected * 16));
  }
  Eigen::VectorXcd v = unpack_complex(bytes);
  if (!v.allFinite()) throw NumericalError("bridge payload contains non-finite values");
  return v;
}

}  // namespace

BridgeSession::BridgeSession(const std::string& command, std::chrono::milliseconds timeout)
    : command_(command), timeout_(timeout) {
  if (command.empty()) throw ArgumentError("bridge command is empty");
  if (timeout.count() <= 0) throw ArgumentError("bridge timeout must be positive");
  // A dead child must surface as an error, not kill the host.
  std::signal(SIGPIPE, SIG_IGN);

  int in[2], out[2];
  if (::pipe(in) != 0) throw BridgeError(std::string("pipe: ") + std::strerror(errno));
  if (::pipe(out) != 0) {
    ::close(in[0]);
    ::close(in[1]);
    throw BridgeError(std::string("pipe: ") + std::strerror(errno));
  }
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out[1], STDOUT_FILENO);
  for (int fd : {in[0], in[1], out[0], out[1]}) posix_spawn_file_actions_addclose(&actions, fd);

  const std::string script = "exec " + command;
  const char* argv[] = {"/bin/sh", "-c", script.c_str(), nullptr};
  pid_t pid = 0;
  const int rc = posix_spawn(&pid, "/bin/sh", &actions, nullptr, const_cast<char* const*>(argv), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(in[0]);
  ::close(out[1]);
  to_child_ = in[1];
  from_child_ = out[0];
  if (rc != 0) {
    close_fd(to_child_);
    close_fd(from_child_);
    throw BridgeError("cannot start bridge '" + command + "': " + std::strerror(rc));
  }
  pid_ = pid;

  try {
    const json reply = parse_reply(request(json{{"op", "handshake"}, {"version", kBridgeProtocolVersion}}.dump()));
    handshake_.version = reply.value("version", 0);
    if (handshake_.version != kBridgeProtocolVersion) {
      throw BridgeError("bridge speaks protocol version " + std::to_string(handshake_.version) + ", expected " +
                        std::to_string(kBridgeProtocolVersion));
    }
    handshake_.m = reply.value("m", Eigen::Index{0});
    handshake_.n = reply.value("N", Eigen::Index{0});
    handshake_.gradient_capable = reply.value("gradient", false);
    handshake_.model = reply.value("model", std::string("unnamed"));
    if (handshake_.m <= 0 || handshake_.n <= 0) throw BridgeError("bridge handshake reports non-positive dimensions");
  } catch (const json::exception& e) {
    terminate();
    throw BridgeError(std::string("malformed bridge handshake: ") + e.what());
  } catch (...) {
    terminate();
    throw;
  }
}

BridgeSession::~BridgeSession() {
  if (pid_ > 0) {
    try {
      write_all(json{{"op", "shutdown"}, {"id", next_id_++}}.dump() + "\n");
    } catch (...) {
    }
  }
  terminate();
}

void BridgeSession::terminate() {
  close_fd(to_child_);
  close_fd(from_child_);
  if (pid_ <= 0) return;
  // Give a well-behaved child a moment to exit on EOF.
  for (int i = 0; i < 50; ++i) {
    if (::waitpid(pid_, nullptr, WNOHANG) == pid_) {
      pid_ = -1;
      return;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  ::kill(pid_, SIGKILL);
  ::waitpid(pid_, nullptr, 0);
  pid_ = -1;
}

void BridgeSession::write_all(const std::string& bytes) {
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::write(to_child_, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw BridgeError(std::string("cannot write to bridge: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

std::string BridgeSession::read_line() {
  const auto deadline = Clock::now() + timeout_;
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (left.count() <= 0) {
      terminate();
      throw BridgeTimeout("bridge '" + command_ + "' did not answer within " + std::to_string(timeout_.count()) +
                          " ms");
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(left.count(), 1 << 30)));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw BridgeError(std::string("poll: ") + std::strerror(errno));
    }
    if (ready == 0) continue;
    char chunk[1 << 16];
    const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw BridgeError(std::string("cannot read from bridge: ") + std::strerror(errno));
    }
    if (n == 0) {
      terminate();
      throw BridgeError("bridge '" + command_ + "' exited");
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::string BridgeSession::request(const std::string& body) {
  if (pid_ <= 0) throw BridgeError("bridge session is closed");
  json j = json::parse(body);
  const std::uint64_t id = next_id_++;
  j["id"] = id;
  write_all(j.dump() + "\n");
  const std::string line = read_line();
  const json reply = parse_reply(line);
  if (!reply.contains("id") || !reply.at("id").is_number_unsigned() || reply.at("id").get<std::uint64_t>() != id) {
    throw BridgeError("bridge reply id does not match request " + std::to_string(id));
  }
  if (!reply.value("ok", false)) {
    throw BridgeError("bridge error: " + reply.value("error", std::string("unspecified")));
  }
  return line;
}

Eigen::VectorXcd BridgeSession::forward(const Eigen::VectorXcd& u) {
  if (u.size() != handshake_.m) throw ShapeError("bridge forward expects " + std::to_string(handshake_.m) + " values");
  if (!u.allFinite()) throw NumericalError("bridge input contains non-finite values");
  const json reply =
      parse_reply(request(json{{"op", "forward"}, {"payload", base64_encode(pack_complex(u))}}.dump()));
  return payload_of(reply, "payload", handshake_.n);
}

Eigen::VectorXcd BridgeSession::grad_g(const Eigen::VectorXcd& u, const Eigen::VectorXcd& p) {
  if (!handshake_.gradient_capable) throw CapabilityError("bridged model '" + handshake_.model + "' has no gradient");
  if (u.size() != handshake_.m || p.size() != handshake_.n) throw ShapeError("bridge grad_g dimensions disagree");
  if (!u.allFinite() || !p.allFinite()) throw NumericalError("bridge input contains non-finite values");
  const json reply = parse_reply(request(json{{"op", "grad_g"},
                                              {"payload", base64_encode(pack_complex(u))},
                                              {"target", base64_encode(pack_complex(p))}}
                                             .dump()));
  return payload_of(reply, "payload", handshake_.m);
}

BridgeReconstructor::BridgeReconstructor(const std::string& command, const SamplingOperator& op,
                                         std::chrono::milliseconds timeout)
    : op_(op.clone()), session_(std::make_unique<BridgeSession>(command, timeout)) {
  const auto& hs = session_->handshake();
  if (hs.m != op.measurement_size() || hs.n != op.image_height() * op.image_width()) {
    throw ShapeError("bridged model '" + hs.model + "' has m=" + std::to_string(hs.m) + ", N=" +
                     std::to_string(hs.n) + " but the operator needs m=" + std::to_string(op.measurement_size()) +
                     ", N=" + std::to_string(op.image_height() * op.image_width()));
  }
}

Image BridgeReconstructor::reconstruct(const MeasurementVector& y) {
  if (y.size() != op_->measurement_size()) throw ShapeError("measurements do not match the operator");
  const Eigen::VectorXcd v = session_->forward(y.values);
  Image out(op_->image_height(), op_->image_width());
  out.flat() = v;
  return out;
}

MeasurementVector BridgeReconstructor::grad_g(const MeasurementVector& u, const Image& p) {
  if (!p.same_shape(Image(op_->image_height(), op_->image_width()))) throw ShapeError("target does not match");
  return MeasurementVector{session_->grad_g(u.values, p.flat()), op_->id()};
}

std::unique_ptr<Reconstructor> BridgeReconstructor::clone() const {
  return std::make_unique<BridgeReconstructor>(session_->command(), *op_, session_->timeout());
}

}  // namespace ulens
