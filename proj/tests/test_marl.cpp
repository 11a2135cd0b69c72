#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sagin/baselines.hpp"
#include "sagin/marl.hpp"

using namespace sagin;
using namespace sagin::marl;

namespace {

Transition make_transition(const JointLayout& l, double reward, double fill = 0.1) {
  Transition t;
  t.joint_observation.assign(static_cast<std::size_t>(l.joint_obs_dim()), fill);
  t.next_joint_observation.assign(static_cast<std::size_t>(l.joint_obs_dim()), -fill);
  t.joint_action.assign(static_cast<std::size_t>(l.joint_act_dim()), 0.25);
  t.mask.assign(static_cast<std::size_t>(l.max_agents), 1.0);
  t.next_mask.assign(static_cast<std::size_t>(l.max_agents), 1.0);
  t.reward = reward;
  return t;
}

TrainConfig small_train() {
  TrainConfig c;
  c.actor_hidden = {16};
  c.critic_hidden = {16};
  c.batch_size = 8;
  c.warmup_transitions = 16;
  c.update_period = 2;
  return c;
}

env::EnvConfig small_env(int n_uavs) {
  env::EnvConfig e;
  e.n_uavs = n_uavs;
  e.n_bs = 2;
  e.area_side = 1250.0;
  e.episode_slots = 25;
  return e;
}

bool same_params(const nn::DenseNet& a, const nn::DenseNet& b) {
  return std::equal(a.weights().begin(), a.weights().end(), b.weights().begin()) &&
         std::equal(a.biases().begin(), a.biases().end(), b.biases().begin());
}

}  // namespace

TEST_CASE("replay buffer") {
  const JointLayout l{1, 1, 1};
  ReplayBuffer buf(3);
  for (int i = 0; i < 5; ++i) buf.push(make_transition(l, i));
  CHECK(buf.size() == 3);
  CHECK(buf.at(0).reward == 2.0);
  CHECK(buf.at(2).reward == 4.0);
  Rng rng(1);
  const auto s = buf.sample(3, rng);
  std::set<double> seen;
  for (const auto* t : s) seen.insert(t->reward);
  CHECK(seen == std::set<double>{2.0, 3.0, 4.0});
  CHECK_THROWS_AS(buf.sample(4, rng), ContractViolation);
  CHECK_THROWS_AS(ReplayBuffer(0), ContractViolation);
}

TEST_CASE("Ornstein-Uhlenbeck noise statistics") {
  OUNoise noise(2, 5, 0.3, 0.15);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < 1000; ++i) noise.sample();
  for (int i = 0; i < n; ++i) {
    const double x = noise.sample()[0];
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  // Stationary variance of x' = (1 - theta) x + sigma e.
  const double expected = 0.09 / (1.0 - 0.85 * 0.85);
  CHECK(std::abs(mean) < 0.05);
  CHECK(var == doctest::Approx(expected).epsilon(0.05));
  noise.reset();
  CHECK(noise.state() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("action selection") {
  Rng rng(3);
  TrainConfig cfg = small_train();
  auto agent = make_agent(0, 4, 3, cfg, rng, 9);
  // Fix the output layer: logits (2.0, -1.0, 0.3), priority logit 0.
  {
    const auto& shapes = agent.actor.layer_shapes();
    const std::size_t last_w = agent.actor.weights().size() - static_cast<std::size_t>(shapes.back().in * shapes.back().out);
    auto w = agent.actor.mutable_weights();
    std::fill(w.begin() + static_cast<std::ptrdiff_t>(last_w), w.end(), 0.0);
    auto b = agent.actor.mutable_biases();
    const std::size_t last_b = b.size() - 4;
    b[last_b] = 2.0;
    b[last_b + 1] = -1.0;
    b[last_b + 2] = 0.3;
    b[last_b + 3] = 0.0;
  }
  const std::vector<double> obs{0.1, 0.2, 0.3, 0.4};
  const auto a = select_action(agent, obs, false, 1);
  const auto b = select_action(agent, obs, false, 1);
  CHECK(a.action.device == DeviceId::local());
  CHECK(a.action.priority == 0.5);
  CHECK(a.encoding == b.encoding);
  CHECK(a.encoding.size() == 4);
  CHECK(a.encoding[0] + a.encoding[1] + a.encoding[2] == doctest::Approx(1.0));

  int differ = 0;
  for (int i = 0; i < 1000; ++i) differ += select_action(agent, obs, true, 1).action.device != a.action.device ? 1 : 0;
  CHECK(differ > 0);
  CHECK_THROWS_AS(select_action(agent, obs, false, 2), ContractViolation);
}

TEST_CASE("critic target") {
  SUBCASE("myopic") {
    const auto r = oracle::myopic_target(12);
    INFO(r.detail);
    CHECK(r.pass);
  }
  SUBCASE("zero target critic") {
    const JointLayout l{2, 3, 3};
    TrainConfig cfg = small_train();
    cfg.gamma = 0.9;
    Rng rng(1);
    Critic critic = make_critic(l, cfg, rng);
    critic.target = nn::DenseNet::zeros({l.critic_input_dim(), 16, 1}, {});
    auto agent = make_agent(0, 3, 2, cfg, rng, 1);
    const std::vector<const AgentBundle*> agents{&agent, &agent};
    const Transition t1 = make_transition(l, 1.5), t2 = make_transition(l, -0.25);
    const auto y = critic_target(critic, agents, Batch{&t1, &t2}, l, cfg);
    CHECK(y == std::vector<double>{1.5, -0.25});
  }
  SUBCASE("two agents with hand-set linear networks") {
    const JointLayout l{2, 1, 1};
    TrainConfig cfg;
    cfg.gamma = 0.5;
    // Target actors a_j = w_j o_j + b_j.
    Rng rng(1);
    AgentBundle a0 = make_agent(0, 1, 1, small_train(), rng, 1);
    AgentBundle a1 = a0;
    a0.target_actor = nn::DenseNet::zeros({1, 1}, {});
    a0.target_actor.mutable_weights()[0] = 2.0;
    a0.target_actor.mutable_biases()[0] = 0.5;
    a1.target_actor = nn::DenseNet::zeros({1, 1}, {});
    a1.target_actor.mutable_weights()[0] = -1.0;
    a1.target_actor.mutable_biases()[0] = 0.25;
    // Linear critic over [o0 o1 | a0 a1 | m0 m1].
    Critic critic{nn::DenseNet::zeros({6, 1}, {}), nn::DenseNet::zeros({6, 1}, {}), {}};
    const double c[6] = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
    auto w = critic.target.mutable_weights();
    for (int i = 0; i < 6; ++i) w[static_cast<std::size_t>(i)] = c[i];
    critic.target.mutable_biases()[0] = 0.05;

    Transition t;
    t.joint_observation = {0, 0};
    t.joint_action = {0, 0};
    t.mask = {1, 1};
    t.reward = 1.0;
    t.next_joint_observation = {0.4, -0.8};
    t.next_mask = {1, 0};  // agent 1 absent next step
    Transition done = t;
    done.done = true;
    const std::vector<const AgentBundle*> agents{&a0, &a1};
    const auto y = critic_target(critic, agents, Batch{&t, &done}, l, cfg);
    const double act0 = 2.0 * 0.4 + 0.5;
    const double q = 0.1 * 0.4 + 0.2 * -0.8 + 0.3 * act0 + 0.4 * 0.0 + 0.5 * 1.0 + 0.6 * 0.0 + 0.05;
    CHECK(std::abs(y[0] - (1.0 + 0.5 * q)) < 1e-12);
    CHECK(y[1] == 1.0);
  }
}

TEST_CASE("critic update") {
  SUBCASE("zero-loss batch") {
    const auto r = oracle::zero_loss_critic(13);
    INFO(r.detail);
    CHECK(r.pass);
  }
  SUBCASE("duplicating the batch changes nothing") {
    const JointLayout l{2, 2, 3};
    TrainConfig cfg = small_train();
    Rng rng(2);
    Critic a = make_critic(l, cfg, rng);
    Critic b = a;
    std::vector<Transition> store;
    for (int i = 0; i < 4; ++i) store.push_back(make_transition(l, 0.5 * i, 0.1 * i));
    Batch once, twice;
    for (const auto& t : store) once.push_back(&t);
    twice = once;
    twice.insert(twice.end(), once.begin(), once.end());
    const std::vector<double> y1{0.1, 0.2, 0.3, 0.4};
    std::vector<double> y2 = y1;
    y2.insert(y2.end(), y1.begin(), y1.end());
    const double l1 = critic_update(a, once, y1, l);
    const double l2 = critic_update(b, twice, y2, l);
    CHECK(l1 == doctest::Approx(l2).epsilon(1e-14));
    for (std::size_t i = 0; i < a.net.weights().size(); ++i)
      REQUIRE(a.net.weights()[i] == doctest::Approx(b.net.weights()[i]).epsilon(1e-12));
  }
  SUBCASE("loss decreases under repeated steps") {
    const JointLayout l{1, 2, 3};
    TrainConfig cfg = small_train();
    Rng rng(3);
    Critic c = make_critic(l, cfg, rng);
    const Transition t = make_transition(l, 0.0);
    const std::vector<double> y{0.8};
    const double first = critic_update(c, Batch{&t}, y, l);
    double last = first;
    for (int i = 0; i < 200; ++i) last = critic_update(c, Batch{&t}, y, l);
    CHECK(last < 0.01 * first);
  }
}

TEST_CASE("actor update") {
  SUBCASE("dead path leaves the actor untouched") {
    const JointLayout l{2, 3, 3};
    TrainConfig cfg = small_train();
    Rng rng(4);
    Critic critic = make_critic(l, cfg, rng);
    {
      auto w = critic.net.mutable_weights();
      const int in = l.critic_input_dim();
      const int first_row = l.joint_obs_dim() + l.act_dim;  // agent 1's action slice
      for (int h = 0; h < cfg.critic_hidden[0]; ++h)
        for (int k = 0; k < l.act_dim; ++k) w[static_cast<std::size_t>(h * in + first_row + k)] = 0.0;
    }
    auto agent = make_agent(1, 3, 2, cfg, rng, 3);
    const nn::DenseNet before = agent.actor;
    const Transition t = make_transition(l, 0.0, 0.3);
    actor_update(agent, 1, critic, Batch{&t}, l);
    CHECK(same_params(before, agent.actor));
  }
  SUBCASE("absent agent gets no update") {
    const JointLayout l{2, 3, 3};
    TrainConfig cfg = small_train();
    Rng rng(5);
    Critic critic = make_critic(l, cfg, rng);
    auto agent = make_agent(0, 3, 2, cfg, rng, 3);
    Transition t = make_transition(l, 0.0);
    t.mask = {0.0, 1.0};
    CHECK(std::isnan(actor_update(agent, 0, critic, Batch{&t}, l)));
    CHECK(agent.actor_optimizer.step_count == 0);
  }
  SUBCASE("bowl") {
    const auto r = oracle::quadratic_bowl(14);
    INFO(r.detail);
    CHECK(r.pass);
  }
  SUBCASE("chained gradient") {
    const auto r = oracle::chained_gradient(15, 20);
    INFO(r.detail);
    CHECK(r.pass);
  }
}

TEST_CASE("train cycle") {
  const JointLayout l{2, 3, 3};
  TrainConfig cfg = small_train();
  Rng rng(6);
  Critic critic = make_critic(l, cfg, rng);
  auto a0 = make_agent(0, 3, 2, cfg, rng, 1);
  auto a1 = make_agent(1, 3, 2, cfg, rng, 2);
  ReplayBuffer buf(100);
  Rng fill(7);
  auto push_random = [&] {
    Transition t = make_transition(l, std::uniform_real_distribution<double>(-1, 1)(fill));
    for (auto& v : t.joint_observation) v = std::uniform_real_distribution<double>(-1, 1)(fill);
    buf.push(std::move(t));
  };
  for (int i = 0; i < 10; ++i) push_random();
  std::vector<AgentBundle*> agents{&a0, &a1};

  SUBCASE("below warmup nothing changes") {
    const Critic before = critic;
    Rng r(1);
    CHECK_FALSE(train_cycle(agents, critic, buf, cfg, l, r).trained);
    CHECK(same_params(before.net, critic.net));
  }
  for (int i = 0; i < 20; ++i) push_random();
  SUBCASE("tau = 1 copies") {
    cfg.tau = 1.0;
    Rng r(1);
    const auto m = train_cycle(agents, critic, buf, cfg, l, r);
    CHECK(m.trained);
    CHECK(std::isfinite(m.critic_loss));
    CHECK(same_params(critic.target, critic.net));
    CHECK(same_params(a0.target_actor, a0.actor));
    CHECK(same_params(a1.target_actor, a1.actor));
  }
  SUBCASE("replay determinism") {
    Critic c2 = critic;
    auto b0 = a0, b1 = a1;
    std::vector<AgentBundle*> twins{&b0, &b1};
    Rng r1(99), r2(99);
    for (int k = 0; k < 3; ++k) {
      train_cycle(agents, critic, buf, cfg, l, r1);
      train_cycle(twins, c2, buf, cfg, l, r2);
    }
    CHECK(same_params(critic.net, c2.net));
    CHECK(same_params(a0.actor, b0.actor));
    CHECK(same_params(a1.target_actor, b1.target_actor));
  }
}

TEST_CASE("episode drivers") {
  const TrainConfig cfg = small_train();
  RunOptions opt;
  opt.seed = 3;
  opt.episodes = 2;

  SUBCASE("no episodes") {
    RunOptions none = opt;
    none.episodes = 0;
    const auto art = cmaddpg_run(small_env(4), {}, cfg, none);
    CHECK(art.slots.empty());
    CHECK(art.train_cycles == 0);
  }
  SUBCASE("one UAV: clustered and per-UAV runs coincide") {
    const auto c = cmaddpg_run(small_env(1), {}, cfg, opt);
    const auto n = baselines::naive_maddpg_run(small_env(1), cfg, opt);
    REQUIRE(c.slots.size() == n.slots.size());
    for (std::size_t i = 0; i < c.slots.size(); ++i) REQUIRE(c.slots[i].reward == n.slots[i].reward);
    CHECK(c.agent_counts == std::vector<int>{1, 1});
    CHECK(c.train_cycles > 0);
    REQUIRE(c.networks.size() == n.networks.size());
    for (std::size_t i = 0; i < c.networks.size(); ++i) CHECK(same_params(c.networks[i].second, n.networks[i].second));
  }
  SUBCASE("agent count follows the cluster count") {
    env::EnvConfig e = small_env(12);
    e.area_side = 2500.0;
    cluster::ClusterConfig cc;
    const int k = cluster::optimal_cluster_count(12, e.area_side * e.area_side, cc).count;
    const auto art = cmaddpg_run(e, cc, cfg, opt);
    for (int n : art.agent_counts) CHECK(n == k);
    CHECK(k < 12);
    const auto naive = baselines::naive_maddpg_run(e, cfg, opt);
    for (int n : naive.agent_counts) CHECK(n == 12);
  }
  SUBCASE("independent critics see one agent") {
    const auto art = baselines::maac_run(small_env(3), cfg, opt);
    const int od = env::Observation::dimension(2);
    int critics = 0;
    for (const auto& [name, net] : art.networks)
      if (name.rfind("critic_", 0) == 0 && name.rfind("critic_target", 0) != 0) {
        ++critics;
        CHECK(net.input_size() == od + 5 + 1);
      }
    CHECK(critics == 3);
  }
  SUBCASE("runs are reproducible") {
    const auto a = cmaddpg_run(small_env(5), {}, cfg, opt);
    const auto b = cmaddpg_run(small_env(5), {}, cfg, opt);
    REQUIRE(a.slots.size() == b.slots.size());
    for (std::size_t i = 0; i < a.slots.size(); ++i) {
      REQUIRE(a.slots[i].reward == b.slots[i].reward);
      REQUIRE(a.slots[i].cluster_count == b.slots[i].cluster_count);
    }
  }
}
