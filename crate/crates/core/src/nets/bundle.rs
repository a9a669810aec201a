use super::checkpoint::Archive;
use super::network::{MessageBatch, Net, NetSpec};
use super::tensor::Tensor;
use super::NetError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Architecture settings shared by every network of a [`PolicyBundle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BundleConfig {
    pub obs_dim: usize,
    pub hidden: usize,
    pub key_dim: usize,
    /// Half-range of the residual added to the DWA suggestion, in normalized
    /// action units `(v / v_max, w / w_max)`.
    pub residual_scale: [f64; 2],
    /// Keep the repeated relative-patience entry in patience messages.
    pub duplicate_patience: bool,
    pub init_log_std: f32,
}

impl Default for BundleConfig {
    fn default() -> Self {
        Self {
            obs_dim: crate::env::OBS_DIM,
            hidden: 256,
            key_dim: 24,
            residual_scale: [0.5, 0.5],
            duplicate_patience: true,
            init_log_std: -1.0,
        }
    }
}

impl BundleConfig {
    /// Row widths of the two patience-message streams.
    pub fn patience_dims(&self) -> (usize, usize) {
        if self.duplicate_patience {
            (3, 3)
        } else {
            (3, 2)
        }
    }

    /// Row widths of the two state-message streams.
    pub fn state_dims(&self) -> (usize, usize) {
        (2, 2)
    }
}

/// Every network of the fairness-aware navigation policy: the solitary
/// policy and its critics, the residual navigation module and its critics,
/// and the binary fairness filter and its critics.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyBundle {
    pub config: BundleConfig,
    pub solitary_actor: Net,
    pub solitary_critics: [Net; 2],
    pub nav_actor: Net,
    pub nav_critics: [Net; 2],
    pub cf2_actor: Net,
    pub cf2_critics: [Net; 2],
}

const NET_NAMES: [&str; 9] = [
    "solitary_actor",
    "solitary_critic1",
    "solitary_critic2",
    "nav_actor",
    "nav_critic1",
    "nav_critic2",
    "cf2_actor",
    "cf2_critic1",
    "cf2_critic2",
];

impl PolicyBundle {
    pub fn new(config: BundleConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = |action_dim, msg_dims, out_dim| NetSpec {
            obs_dim: config.obs_dim,
            action_dim,
            msg_dims,
            hidden: config.hidden,
            key_dim: config.key_dim,
            out_dim,
        };
        let sd = Some(config.state_dims());
        let pd = Some(config.patience_dims());
        let mut actor = |name: &str, msg| {
            let mut n = Net::new(spec(0, msg, 4), name, &mut rng);
            n.set_head_constant(0..2, 0.0);
            n.set_head_constant(2..4, config.init_log_std);
            n
        };
        let solitary_actor = actor("solitary_actor", None);
        let nav_actor = actor("nav_actor", sd);
        let solitary_critics = [
            Net::new(spec(2, None, 1), "solitary_critic1", &mut rng),
            Net::new(spec(2, None, 1), "solitary_critic2", &mut rng),
        ];
        let nav_critics = [
            Net::new(spec(2, sd, 1), "nav_critic1", &mut rng),
            Net::new(spec(2, sd, 1), "nav_critic2", &mut rng),
        ];
        let mut cf2_actor = Net::new(spec(0, pd, 2), "cf2_actor", &mut rng);
        cf2_actor.set_head_constant(0..2, 0.0);
        let cf2_critics = [
            Net::new(spec(0, pd, 2), "cf2_critic1", &mut rng),
            Net::new(spec(0, pd, 2), "cf2_critic2", &mut rng),
        ];
        Self {
            config,
            solitary_actor,
            solitary_critics,
            nav_actor,
            nav_critics,
            cf2_actor,
            cf2_critics,
        }
    }

    fn nets(&self) -> [&Net; 9] {
        [
            &self.solitary_actor,
            &self.solitary_critics[0],
            &self.solitary_critics[1],
            &self.nav_actor,
            &self.nav_critics[0],
            &self.nav_critics[1],
            &self.cf2_actor,
            &self.cf2_critics[0],
            &self.cf2_critics[1],
        ]
    }

    fn nets_mut(&mut self) -> [&mut Net; 9] {
        let [s0, s1] = &mut self.solitary_critics;
        let [n0, n1] = &mut self.nav_critics;
        let [c0, c1] = &mut self.cf2_critics;
        [
            &mut self.solitary_actor,
            s0,
            s1,
            &mut self.nav_actor,
            n0,
            n1,
            &mut self.cf2_actor,
            c0,
            c1,
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.nets().iter().all(|n| n.params.all_finite())
    }

    /// Raw solitary actor head `[B, 4]`.
    pub fn solitary_head(&self, obs: &Tensor<f32>) -> Tensor<f32> {
        self.solitary_actor.eval(obs, None, None)
    }

    /// `Q_mu(o, a)` as the minimum of the twin solitary critics. Actions are
    /// normalized `(v / v_max, w / w_max)`.
    pub fn solitary_q(&self, obs: &Tensor<f32>, actions: &Tensor<f32>) -> Vec<f32> {
        let q1 = self.solitary_critics[0].eval(obs, Some(actions), None);
        let q2 = self.solitary_critics[1].eval(obs, Some(actions), None);
        q1.data()
            .iter()
            .zip(q2.data())
            .map(|(&a, &b)| a.min(b))
            .collect()
    }

    pub fn nav_head(&self, obs: &Tensor<f32>, msgs: &MessageBatch) -> Tensor<f32> {
        self.nav_actor.eval(obs, None, Some(msgs))
    }

    pub fn cf2_logits(&self, obs: &Tensor<f32>, msgs: &MessageBatch) -> Tensor<f32> {
        self.cf2_actor.eval(obs, None, Some(msgs))
    }

    /// Zeroes the navigation residual mean so that deterministic actions equal
    /// the DWA suggestion.
    pub fn zero_nav_residual(&mut self) {
        self.nav_actor.set_head_constant(0..2, 0.0);
    }

    pub fn zero_solitary_residual(&mut self) {
        self.solitary_actor.set_head_constant(0..2, 0.0);
    }

    pub fn to_archive(&self) -> Archive {
        let mut a = Archive::default();
        let c = &self.config;
        a.push_meta("kind", "policy_bundle");
        a.push_meta("obs_dim", c.obs_dim.to_string());
        a.push_meta("hidden", c.hidden.to_string());
        a.push_meta("key_dim", c.key_dim.to_string());
        a.push_meta("residual_scale_v", c.residual_scale[0].to_string());
        a.push_meta("residual_scale_w", c.residual_scale[1].to_string());
        a.push_meta("duplicate_patience", c.duplicate_patience.to_string());
        a.push_meta("init_log_std", c.init_log_std.to_string());
        self.append_params(&mut a, "");
        a
    }

    /// Adds every parameter tensor to `a` under `prefix + net/param`.
    pub fn append_params(&self, a: &mut Archive, prefix: &str) {
        for (net_name, net) in NET_NAMES.iter().zip(self.nets()) {
            for (pname, t) in net.params.names().iter().zip(net.params.tensors()) {
                a.push(format!("{prefix}{net_name}/{pname}"), t.clone());
            }
        }
    }

    /// Overwrites parameters from tensors named `prefix + net/param`.
    pub fn load_params(&mut self, a: &Archive, prefix: &str) -> Result<(), NetError> {
        for (net_name, net) in NET_NAMES.iter().zip(self.nets_mut()) {
            let names = net.params.names().to_vec();
            for (i, pname) in names.iter().enumerate() {
                let key = format!("{prefix}{net_name}/{pname}");
                let t = a
                    .tensor(&key)
                    .ok_or_else(|| NetError::Checkpoint(format!("missing tensor {key}")))?;
                let slot = &mut net.params.tensors_mut()[i];
                if t.shape() != slot.shape() {
                    return Err(NetError::Checkpoint(format!(
                        "tensor {key} has shape {:?}, expected {:?}",
                        t.shape(),
                        slot.shape()
                    )));
                }
                *slot = t.clone();
            }
        }
        Ok(())
    }

    pub fn config_from_archive(a: &Archive) -> Result<BundleConfig, NetError> {
        fn get<T: std::str::FromStr>(a: &Archive, k: &str) -> Result<T, NetError> {
            a.meta(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| NetError::Checkpoint(format!("missing or invalid metadata {k}")))
        }
        Ok(BundleConfig {
            obs_dim: get(a, "obs_dim")?,
            hidden: get(a, "hidden")?,
            key_dim: get(a, "key_dim")?,
            residual_scale: [get(a, "residual_scale_v")?, get(a, "residual_scale_w")?],
            duplicate_patience: get(a, "duplicate_patience")?,
            init_log_std: get(a, "init_log_std")?,
        })
    }

    pub fn from_archive(a: &Archive) -> Result<Self, NetError> {
        let config = Self::config_from_archive(a)?;
        let mut b = Self::new(config, 0);
        b.load_params(a, "")?;
        Ok(b)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), NetError> {
        self.to_archive().save(path)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, NetError> {
        Self::from_archive(&Archive::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BundleConfig {
        BundleConfig {
            hidden: 8,
            key_dim: 4,
            ..Default::default()
        }
    }

    #[test]
    fn checkpoint_save_load_save_is_bitwise() {
        let b = PolicyBundle::new(small(), 5);
        let bytes = b.to_archive().to_bytes();
        let back = PolicyBundle::from_archive(&Archive::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.to_archive().to_bytes(), bytes);
    }

    #[test]
    fn untrained_filter_logits_tie() {
        let b = PolicyBundle::new(small(), 1);
        let obs = Tensor::full(3, b.config.obs_dim, 0.3);
        let msgs = MessageBatch {
            counts: vec![0, 0, 0],
            ..Default::default()
        };
        let l = b.cf2_logits(&obs, &msgs);
        assert!(l.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let b = PolicyBundle::new(small(), 1);
        let mut a = b.to_archive();
        a.tensors[0].1 = Tensor::zeros(1, 1);
        let mut c = PolicyBundle::new(small(), 2);
        assert!(c.load_params(&a, "").is_err());
    }
}
