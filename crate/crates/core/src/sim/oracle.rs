use super::{
    object_pixels, swept_path_hits, to_pixel, Action, Catalog, Role, Scene, SimError, SWEEP_END_X,
};
use crate::scenario::{ScenarioSpec, TaskKind};

/// Scripted expert: the action that solves `scene` for `spec`.
///
/// Sweeps aim straight right at `SWEEP_END_X`; when that path would touch an
/// obstacle the end-point is moved along the goal band to the nearest pixel
/// row with a clear path.
pub fn oracle_action(catalog: &Catalog, spec: &ScenarioSpec, scene: &Scene) -> Result<Action, SimError> {
    let ti = scene
        .index_of_role(Role::Target)
        .ok_or_else(|| SimError::Oracle(format!("{}: scene has no target", spec.id)))?;
    let target = &scene.objects[ti];
    let [x, y] = target.position;
    match spec.task {
        TaskKind::PickPlace => {
            let goal = scene.goal().ok_or_else(|| SimError::Oracle(format!("{}: scene has no goal", spec.id)))?;
            Ok(Action([x, y, goal.position[0], goal.position[1]]))
        }
        TaskKind::Rotate => {
            let deg = spec
                .rotation_degrees
                .ok_or_else(|| SimError::Oracle(format!("{}: no rotation target", spec.id)))?;
            let (s, c) = deg.to_radians().sin_cos();
            Ok(Action([x, y, c, s]))
        }
        TaskKind::Sweep => {
            let res = catalog.resolution();
            let blocked: Vec<(i32, i32)> = scene
                .objects
                .iter()
                .filter(|o| o.role == Role::Obstacle)
                .flat_map(|o| object_pixels(catalog, o).into_iter().map(|c| (c.x, c.y)))
                .collect();
            let anchor = (to_pixel(x, res), to_pixel(y, res));
            let offsets: Vec<(i32, i32)> = object_pixels(catalog, target)
                .iter()
                .map(|c| (c.x - anchor.0, c.y - anchor.1))
                .collect();
            let clear = |ey: f64| {
                let delta = ((SWEEP_END_X - x) * res as f64, (ey - y) * res as f64);
                !swept_path_hits(&offsets, anchor, delta, &blocked)
            };
            let mut candidates: Vec<f64> = vec![y];
            candidates.extend((0..res).map(|k| (k as f64 + 0.5) / res as f64));
            // Nearest row first; ties resolve to the smaller ordinate.
            candidates.sort_by(|a, b| {
                (a - y).abs().partial_cmp(&(b - y).abs()).unwrap().then(a.partial_cmp(b).unwrap())
            });
            candidates
                .into_iter()
                .find(|&ey| clear(ey))
                .map(|ey| Action([x, y, SWEEP_END_X, ey]))
                .ok_or_else(|| SimError::Oracle(format!("{}: every sweep path touches an obstacle", spec.id)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Registry;
    use crate::sim::{check_success, sample_scene, step, SceneObject, SuccessParams};

    #[test]
    fn direct_readout_for_pick_place() {
        let reg = Registry::builtin();
        let cat = reg.catalog();
        let spec = reg.scenario("heart").unwrap();
        let mut scene = sample_scene(cat, spec, &spec.truth, 3).unwrap();
        let ti = scene.index_of_role(Role::Target).unwrap();
        scene.objects[ti].position = [0.25, 0.25];
        assert_eq!(oracle_action(cat, spec, &scene).unwrap(), Action([0.25, 0.25, 0.75, 0.75]));
    }

    #[test]
    fn rotate_readout() {
        let reg = Registry::builtin();
        let spec = reg.scenario("rotate-block").unwrap();
        assert_eq!(spec.rotation_degrees, Some(125.0));
        let scene = sample_scene(reg.catalog(), spec, &spec.truth, 5).unwrap();
        let t = &scene.objects[scene.index_of_role(Role::Target).unwrap()];
        let a = oracle_action(reg.catalog(), spec, &scene).unwrap();
        let r = 125f64.to_radians();
        assert_eq!(a, Action([t.position[0], t.position[1], r.cos(), r.sin()]));
    }

    #[test]
    fn oracle_succeeds_on_sampled_scenes() {
        let reg = Registry::builtin();
        let cat = reg.catalog();
        let params = SuccessParams::default();
        for spec in reg.scenarios() {
            for seed in 0..100 {
                let scene = sample_scene(cat, spec, &spec.truth, seed).unwrap();
                let a = oracle_action(cat, spec, &scene).unwrap();
                let out = step(cat, &scene, &a).unwrap();
                assert!(check_success(cat, spec, &scene, &out.scene, &params), "{} seed {seed}", spec.id);
            }
        }
    }

    #[test]
    fn fully_blocked_sweep_is_an_oracle_error() {
        let reg = Registry::builtin();
        let cat = reg.catalog();
        let spec = reg.scenario("sweep-block-line").unwrap();
        let line = cat.type_id("line").unwrap();
        let red = cat.texture_id("red").unwrap();
        let mut scene = Scene::empty(spec.task, &spec.id);
        scene.objects.push(SceneObject {
            object_type: cat.type_id("block").unwrap(),
            texture: red,
            position: [0.25, 0.5],
            rotation: 0.0,
            role: Role::Target,
        });
        // A wall of vertical lines across the whole height.
        for k in 0..6 {
            scene.objects.push(SceneObject {
                object_type: line,
                texture: red,
                position: [0.6, k as f64 / 6.0 + 0.05],
                rotation: 90.0,
                role: Role::Obstacle,
            });
        }
        assert!(matches!(oracle_action(cat, spec, &scene), Err(SimError::Oracle(_))));
    }
}
