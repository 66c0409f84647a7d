//! Random scene sampling.

use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::Rng;

use super::DatasetError;
use crate::scene::{build_grid_graph, build_relational_graph, Attribute, ObjectNode, SceneGraph, Value, GRID_CELLS};
use crate::Preset;

/// Relational scenes live in this square.
pub const FLOOR: f64 = 3.0;
/// Minimum distance between object centers.
pub const MIN_SEPARATION: f64 = 0.5;
const PLACEMENT_RETRIES: usize = 1000;

/// Sampling ranges per grid column (x) and row (y), kept clear of the cell boundaries.
const CELL_X: [(f64, f64); 3] = [(-3.0, -1.29), (-0.69, 0.56), (1.16, 3.0)];
const CELL_Y: [(f64, f64); 3] = [(2.65, 4.0), (-0.17, 2.05), (-2.0, -0.77)];

pub fn default_objects(preset: Preset) -> RangeInclusive<usize> {
    match preset {
        Preset::Css => 3..=6,
        Preset::Crir => 4..=6,
    }
}

fn height(size: Value) -> f64 {
    if size == Value::Large {
        0.7
    } else {
        0.35
    }
}

fn random_values<R: Rng>(rng: &mut R, schema: &[Attribute]) -> Vec<Value> {
    schema.iter().map(|a| *a.values().choose(rng).expect("attribute vocabularies are non-empty")).collect()
}

/// Samples a scene with a uniformly drawn object count in `n_objects`.
pub fn generate_scene<R: Rng>(
    rng: &mut R,
    n_objects: RangeInclusive<usize>,
    preset: Preset,
) -> Result<SceneGraph, DatasetError> {
    if n_objects.is_empty() {
        return Err(DatasetError::Config("object range is empty".into()));
    }
    let n = rng.gen_range(n_objects);
    let schema = preset.variant().schema();
    match preset {
        Preset::Css => {
            if n > GRID_CELLS {
                return Err(DatasetError::CellCapacity(n));
            }
            let mut cells: Vec<usize> = (0..GRID_CELLS).collect();
            cells.shuffle(rng);
            let objects = cells[..n]
                .iter()
                .enumerate()
                .map(|(i, &cell)| {
                    let values = random_values(rng, schema);
                    let (x0, x1) = CELL_X[cell % 3];
                    let (y0, y1) = CELL_Y[cell / 3];
                    let pos = [rng.gen_range(x0..x1), rng.gen_range(y0..y1), height(values[1])];
                    ObjectNode::object(i as u32, &values, Some(pos))
                })
                .collect();
            Ok(build_grid_graph(objects)?)
        }
        Preset::Crir => {
            if n < 4 {
                return Err(DatasetError::Config(format!("relational scenes need at least 4 objects, asked for {n}")));
            }
            let mut placed: Vec<[f64; 2]> = Vec::with_capacity(n);
            let mut tries = 0;
            while placed.len() < n {
                tries += 1;
                if tries > PLACEMENT_RETRIES {
                    return Err(DatasetError::Placement(n));
                }
                let p = [rng.gen_range(-FLOOR..FLOOR), rng.gen_range(-FLOOR..FLOOR)];
                let clear = placed.iter().all(|q| {
                    q[0] != p[0] && q[1] != p[1] && ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt() >= MIN_SEPARATION
                });
                if clear {
                    placed.push(p);
                }
            }
            let objects = placed
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let values = random_values(rng, schema);
                    ObjectNode::object(i as u32, &values, Some([p[0], p[1], height(values[1])]))
                })
                .collect();
            Ok(build_relational_graph(objects)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_for;
    use crate::scene::Variant;

    #[test]
    fn seeded_and_well_formed() {
        for preset in [Preset::Css, Preset::Crir] {
            let a = generate_scene(&mut rng_for(5, 0), default_objects(preset), preset).unwrap();
            let b = generate_scene(&mut rng_for(5, 0), default_objects(preset), preset).unwrap();
            assert_eq!(a, b);
            assert!(default_objects(preset).contains(&a.object_count()));
        }
        let g = generate_scene(&mut rng_for(1, 1), 4..=4, Preset::Css).unwrap();
        assert_eq!((g.variant(), g.len(), g.object_count()), (Variant::Grid, 9, 4));
    }

    #[test]
    fn capacity_errors() {
        assert!(matches!(generate_scene(&mut rng_for(0, 0), 10..=10, Preset::Css), Err(DatasetError::CellCapacity(10))));
        assert!(generate_scene(&mut rng_for(0, 0), 3..=3, Preset::Crir).is_err());
    }
}
