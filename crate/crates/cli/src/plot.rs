//! Generated matplotlib scripts that read the CSVs next to them.

const PRELUDE: &str = "\
import pathlib
import matplotlib.pyplot as plt
import pandas as pd

here = pathlib.Path(__file__).resolve().parent


def load(name):
    return pd.read_csv(here / name, comment=\"#\")

";

fn list(files: &[(String, String)]) -> String {
    let items: Vec<String> = files
        .iter()
        .map(|(label, f)| format!("    ({label:?}, {f:?}),"))
        .collect();
    format!("runs = [\n{}\n]\n", items.join("\n"))
}

fn save(stem: &str) -> String {
    format!("fig.tight_layout()\nfig.savefig(here / \"{stem}.png\", dpi=150)\n")
}

/// Stored energy and target fidelity against time, one line per run.
pub fn trajectories(stem: &str, runs: &[(String, String)]) -> String {
    format!(
        "{PRELUDE}{}
fig, (ax_e, ax_f) = plt.subplots(1, 2, figsize=(10, 4))
for label, name in runs:
    df = load(name)
    ax_e.plot(df[\"t\"], df[\"dE\"], label=label)
    ax_f.plot(df[\"t\"], df[\"fidelity\"], label=label)
ax_e.set_xlabel(\"t\")
ax_e.set_ylabel(\"stored energy\")
ax_f.set_xlabel(\"t\")
ax_f.set_ylabel(\"fidelity to target\")
ax_e.legend()
{}",
        list(runs),
        save(stem)
    )
}

/// Stored energy against `Gamma t` for each initial state.
pub fn decay(stem: &str, csv: &str) -> String {
    format!(
        "{PRELUDE}df = load({csv:?})
fig, ax = plt.subplots(figsize=(6, 4))
for col in df.columns[1:]:
    ax.plot(df[\"gamma_t\"], df[col], label=col.removeprefix(\"dE_\"))
ax.set_xlabel(\"Gamma t\")
ax.set_ylabel(\"stored energy\")
ax.legend()
{}",
        save(stem)
    )
}

/// Spectator overlap and the eigenvector-coefficient error against `J / alpha`.
pub fn robustness(stem: &str, csv: &str) -> String {
    format!(
        "{PRELUDE}df = load({csv:?})
fig, (ax_o, ax_x) = plt.subplots(1, 2, figsize=(10, 4))
ax_o.semilogx(df[\"J_over_alpha\"], df[\"overlap\"])
ax_o.set_xlabel(\"J / alpha\")
ax_o.set_ylabel(\"spectator overlap\")
ax_x.loglog(df[\"J_over_alpha\"], df[\"abs_deviation\"])
ax_x.set_xlabel(\"J / alpha\")
ax_x.set_ylabel(\"|x_exact - x_approx|\")
{}",
        save(stem)
    )
}

/// Best fidelity over amplitude and cutoff, against the relative phase.
pub fn landscape(stem: &str, csv: &str) -> String {
    format!(
        "{PRELUDE}df = load({csv:?})
best = df.groupby(\"phase\")[\"fidelity\"].max()
fig, ax = plt.subplots(figsize=(6, 4))
ax.plot(best.index, best.values, marker=\"o\")
ax.set_xlabel(\"relative phase\")
ax.set_ylabel(\"best fidelity\")
{}",
        save(stem)
    )
}
