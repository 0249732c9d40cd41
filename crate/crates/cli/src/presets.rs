//! Shipped run configurations.

pub const SPIRAL: &str = r#"
[problem]
kind = "spiral"
spiral_count = 1000
spiral_sigma = 1.0
data_seed = 17

[regularizer]
mode = "dc"
width = 128
depth = 3
activation = "leaky-relu"
leaky_slope = 0.2
rho = 0.05
init_seed = 1

[train]
lambda_gp = 10.0
lr = 3e-3
batch_size = 32
epochs = 220
seed = 7
optimizer = "adam"
penalty_at = "interpolate"
use_val = true
val_every = 10

[solver]
algorithm = "gd"
outer_iters = 100
mu = "0.5"

[output]
dir = "runs/spiral"
"#;

pub const CT_SPARSE_DESK: &str = r#"
[problem]
kind = "ct"
image_size = 32
num_angles = 30
rays_per_angle = 0
missing_wedge_deg = 0.0
noise_rel = 0.01
num_train = 300
num_val = 4
num_test = 10
data_seed = 1000
ridge = 1e-4

[regularizer]
mode = "dc"
width = 64
depth = 4
activation = "leaky-relu"
leaky_slope = 0.2
init_seed = 3

[train]
lambda_gp = 10.0
lr = 3e-4
batch_size = 16
epochs = 80
seed = 5
use_val = true
val_every = 10

[solver]
algorithm = "psm"
outer_iters = 500
inner_iters = 5
psm_inner = 1
alpha = "auto"
mu = "5.0"
l_const = 1.0

[output]
dir = "runs/ct-sparse"
"#;

pub const CT_LIMITED_DESK: &str = r#"
[problem]
kind = "ct"
image_size = 32
num_angles = 30
rays_per_angle = 0
missing_wedge_deg = 60.0
noise_rel = 0.01
num_train = 300
num_val = 4
num_test = 10
data_seed = 1100
ridge = 1e-4

[regularizer]
mode = "dc"
width = 64
depth = 4
activation = "leaky-relu"
leaky_slope = 0.2
init_seed = 3

[train]
lambda_gp = 10.0
lr = 3e-4
batch_size = 16
epochs = 80
seed = 5
use_val = true
val_every = 10

[solver]
algorithm = "psm"
outer_iters = 500
inner_iters = 6
psm_inner = 1
alpha = "auto"
mu = "5.0"
l_const = 1.0

[output]
dir = "runs/ct-limited"
"#;

pub const STARGEOM_DEMO: &str = r#"
[stargeom]
op = "demo"
grid_m = 4096
alpha = 1.0
clean_std = 1.0
noisy_std = 0.5
contour_res = 121
lutwak_pairs = 100
seed = 29

[output]
dir = "runs/stargeom"
"#;

pub fn by_name(name: &str) -> Option<&'static str> {
    match name {
        "spiral" => Some(SPIRAL),
        "ct-sparse-desk" => Some(CT_SPARSE_DESK),
        "ct-limited-desk" => Some(CT_LIMITED_DESK),
        "stargeom-demo" => Some(STARGEOM_DEMO),
        _ => None,
    }
}

pub const NAMES: [&str; 4] = ["spiral", "ct-sparse-desk", "ct-limited-desk", "stargeom-demo"];

#[cfg(test)]
mod tests {
    use crate::config::RunConfig;

    #[test]
    fn all_presets_parse() {
        for name in super::NAMES {
            let text = super::by_name(name).unwrap();
            let cfg = RunConfig::from_toml(text).unwrap();
            assert!(!cfg.output.dir.is_empty());
        }
    }
}
