//! Built-in search spaces for DISK, R2D2-U and LAFE.

use super::space::{Domain, Param, ParamKind, SearchSpace};

fn num(name: &str, symbol: &str, kind: ParamKind, initial: [f64; 2], range: [f64; 2], text: [&str; 2]) -> Param {
    Param {
        name: name.into(),
        symbol: symbol.into(),
        kind,
        range: Domain::Bounds(range),
        initial: Domain::Bounds(initial),
        display: Some([text[0].into(), text[1].into()]),
    }
}

fn cat(name: &str, symbol: &str, initial: &[&str], labels: &[&str]) -> Param {
    let v = |s: &[&str]| s.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    Param {
        name: name.into(),
        symbol: symbol.into(),
        kind: ParamKind::Cat,
        range: Domain::Labels(v(labels)),
        initial: Domain::Labels(v(initial)),
        display: None,
    }
}

fn shared_tail(wd_initial: [f64; 2], wd_text: &str) -> Vec<Param> {
    use ParamKind::*;
    vec![
        num("wd", "wd", Log, wd_initial, [1e-8, 1e-3], [wd_text, "1e-8–1e-3"]),
        num("lambda_r", "λ_r", Uni, [8.0, 12.0], [0.0, 20.0], ["8–12", "0–20"]),
        num("lambda_p", "λ_p", Uni, [0.45, 0.55], [0.2, 0.9], ["0.45–0.55", "0.2–0.9"]),
        num("lambda_n", "λ_n", Uni, [0.08, 0.12], [0.0, 0.3], ["0.08–0.12", "0.0–0.3"]),
        cat("synth", "synth", &["false"], &["false", "true"]),
    ]
}

pub fn disk() -> SearchSpace {
    use ParamKind::*;
    let mut p = vec![
        num("rho_fp", "ρ_{fp}", Uni, [0.23, 0.27], [0.0, 0.5], ["0.23–0.27", "0.0–0.5"]),
        cat("h", "h", &["8"], &["6", "8", "12"]),
        num("theta_m", "θ_M", Log, [48.0, 52.0], [20.0, 500.0], ["48–52", "20–500"]),
        num("epsilon", "ϵ", Uni, [1.4, 1.6], [1.0, 5.0], ["1.4–1.6", "1.0–5.0"]),
    ];
    p.extend(shared_tail([0.9e-6, 1.1e-6], "0.9e-6–1.1e-6"));
    SearchSpace { params: p }
}

pub fn r2d2u() -> SearchSpace {
    use ParamKind::*;
    let mut p = vec![
        num("alpha", "α", Uni, [0.23, 0.27], [0.1, 1.0], ["0.23–0.27", "0.1–1.0"]),
        num("beta", "β", Uni, [0.18, 0.22], [0.05, 0.5], ["0.18–0.22", "0.05–0.5"]),
        num("kappa", "κ", Uni, [0.58, 0.62], [0.5, 0.99], ["0.58–0.62", "0.5–0.99"]),
        num("n_rep", "n_{rep}", Int, [23.0, 25.0], [16.0, 32.0], ["23–25", "16–32"]),
        num("r_pos", "r_{pos}", Int, [1.0, 2.0], [1.0, 5.0], ["1–2", "1–5"]),
        num("r_neg", "r_{neg}", Int, [9.0, 11.0], [6.0, 20.0], ["9–11", "6–20"]),
    ];
    p.extend(shared_tail([0.9e-6, 1.1e-6], "0.9e-6–1.1e-6"));
    SearchSpace { params: p }
}

pub fn lafe() -> SearchSpace {
    use ParamKind::*;
    SearchSpace {
        params: vec![
            cat("arch", "arch", &["mn2"], &["mn2", "mn3", "en0"]),
            cat("desc_se", "desc-se", &["true"], &["true", "false"]),
            num("wd", "wd", Log, [0.9e-8, 1.1e-8], [1e-9, 1e-5], ["0.9e-8–1.1e-8", "1e-9–1e-5"]),
            num("lambda_g_st", "λ_g^{st}", Uni, [1.08, 1.12], [1.0, 1.3], ["1.08–1.12", "1.0–1.3"]),
            num("lambda_sigma_st", "λ_σ^{st}", Uni, [0.01, 0.02], [0.0, 0.1], ["0.01–0.02", "0.0–0.1"]),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for s in [disk(), r2d2u(), lafe()] {
            s.validate().unwrap();
        }
    }

    #[test]
    fn display_text_parses_to_bounds() {
        for s in [disk(), r2d2u(), lafe()] {
            for p in &s.params {
                let Some([i, r]) = &p.display else { continue };
                for (text, dom) in [(i, &p.initial), (r, &p.range)] {
                    let parts: Vec<f64> = text.split('–').map(|t| t.parse().unwrap()).collect();
                    let Domain::Bounds(b) = dom else { panic!() };
                    assert_eq!(parts.len(), 2);
                    assert!((parts[0] - b[0]).abs() <= 1e-12 * b[0].abs().max(1e-300));
                    assert!((parts[1] - b[1]).abs() <= 1e-12 * b[1].abs().max(1e-300));
                }
            }
        }
    }
}
