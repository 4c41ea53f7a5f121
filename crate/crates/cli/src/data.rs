//! Embedding-directory layout: `{gallery,probe,train}_<modality>.emb`,
//! `probe_tags.csv`, `train_tags.csv` and `toy_config.json`.

use std::path::Path;

use anyhow::{anyhow, Context};
use depthforge::acw::{self, ClassPrototypes, EmbeddingSet, EpochStats};
use depthforge::evalkit::{ToyConfig, ToyData};

use crate::CliResult;

pub fn emb_path(dir: &Path, split: &str, modality: &str) -> std::path::PathBuf {
    dir.join(format!("{split}_{modality}.emb"))
}

pub fn load_modality(dir: &Path, split: &str, modality: &str) -> CliResult<EmbeddingSet> {
    let path = emb_path(dir, split, modality);
    if !path.exists() {
        return Err(anyhow!(
            "modality '{modality}' has no {split} embeddings: {} not found",
            path.display()
        )
        .into());
    }
    let set = acw::io::load_embeddings(&path).with_context(|| format!("reading {}", path.display()))?;
    if set.modality != modality {
        return Err(anyhow!(
            "{} holds modality '{}', expected '{modality}'",
            path.display(),
            set.modality
        )
        .into());
    }
    Ok(set)
}

/// One unit row per label: the mean of that label's gallery rows.
pub fn prototypes_from_gallery(gallery: &EmbeddingSet) -> CliResult<ClassPrototypes> {
    let classes = gallery.labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    let mut sums = vec![0.0; classes * gallery.dim];
    let mut counts = vec![0usize; classes];
    for (i, &l) in gallery.labels.iter().enumerate() {
        let l = l as usize;
        counts[l] += 1;
        for (s, v) in sums[l * gallery.dim..(l + 1) * gallery.dim].iter_mut().zip(gallery.row(i)) {
            *s += *v as f64;
        }
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(anyhow!(
            "gallery '{}' has no row for label {missing}",
            gallery.modality
        )
        .into());
    }
    for (row, &n) in sums.chunks_exact_mut(gallery.dim).zip(&counts) {
        row.iter_mut().for_each(|v| *v /= n as f64);
    }
    Ok(ClassPrototypes::new(gallery.dim, sums).map_err(|e| anyhow!(e))?)
}

fn write_tags(path: &Path, tags: &[String]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["index", "tag"]).map_err(|e| anyhow!(e))?;
    for (i, t) in tags.iter().enumerate() {
        w.write_record([i.to_string(), t.clone()]).map_err(|e| anyhow!(e))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Tags in probe order, or `None` when the file is absent.
pub fn read_tags(path: &Path, probes: &EmbeddingSet) -> CliResult<Option<Vec<String>>> {
    if !path.exists() {
        return Ok(None);
    }
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut tags = vec![None; probes.len()];
    for rec in r.records() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        let (idx, tag) = match (rec.get(0).and_then(|s| s.parse::<usize>().ok()), rec.get(1)) {
            (Some(i), Some(t)) if i < tags.len() => (i, t),
            _ => return Err(anyhow!("{}: bad row {:?}", path.display(), rec).into()),
        };
        tags[idx] = Some(tag.to_string());
    }
    let tags: Option<Vec<String>> = tags.into_iter().collect();
    match tags {
        Some(t) => Ok(Some(t)),
        None => Err(anyhow!("{} does not tag every probe", path.display()).into()),
    }
}

/// Returns the number of files written.
pub fn write_toy(dir: &Path, cfg: &ToyConfig, toy: &ToyData) -> CliResult<usize> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut files = 0;
    let mut save = |split: &str, set: &EmbeddingSet| -> CliResult<()> {
        let path = emb_path(dir, split, &set.modality);
        acw::io::save_embeddings(set, &path).with_context(|| format!("writing {}", path.display()))?;
        files += 1;
        Ok(())
    };
    let p = &toy.protocol;
    for m in &p.modalities {
        save("gallery", &p.gallery[m])?;
        let idx = p.modalities.iter().position(|x| x == m).unwrap();
        let mut vectors = Vec::with_capacity(p.probes.len() * p.gallery[m].dim);
        for probe in &p.probes {
            vectors.extend(probe.modalities[idx].vector.iter().map(|&v| v as f32));
        }
        let labels = p.probes.iter().map(|q| q.label).collect();
        let set = EmbeddingSet::new(m.clone(), p.gallery[m].dim, labels, vectors).map_err(|e| anyhow!(e))?;
        save("probe", &set)?;
    }
    for set in &toy.train {
        save("train", set)?;
    }
    let tags: Vec<String> = p.probes.iter().map(|q| q.tag.clone()).collect();
    write_tags(&dir.join("probe_tags.csv"), &tags)?;
    write_tags(&dir.join("train_tags.csv"), &toy.train_tags)?;
    let path = dir.join("toy_config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).map_err(|e| anyhow!(e))?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(files + 3)
}

pub fn write_loss_csv(path: &Path, history: &[EpochStats]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["epoch", "mean_loss", "mean_task_loss", "mean_confidence_loss", "lambda"])
        .map_err(|e| anyhow!(e))?;
    for e in history {
        w.write_record([
            e.epoch.to_string(),
            e.mean_loss.to_string(),
            e.mean_task_loss.to_string(),
            e.mean_confidence_loss.to_string(),
            e.lambda.to_string(),
        ])
        .map_err(|e| anyhow!(e))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
