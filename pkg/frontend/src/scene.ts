/**
 * Scene documents and derived kinematic tracks.
 *
 * Mirrors the engine's scene JSON format (format "ig-scene", version 1).
 * A loaded scene is immutable; derived quantities (marker positions,
 * velocities, body tracks) are computed lazily and cached on the scene.
 */

import * as q from "./quat.js";
import type { Quat, Vec3 } from "./quat.js";

export const FORMAT_NAME = "ig-scene";
export const FORMAT_VERSION = 1;

export const TPOSE_MIN_MARKER_DISTANCE = 1e-4; // m
const QUAT_NORM_SLACK = 1e-3; // renormalize quietly below, reject above

const AXES: Record<string, number> = { x: 0, y: 1, z: 2 };

export class SchemaError extends Error {}

export interface JointDoc {
  name: string;
  parent: number | null;
  offset: Vec3;
  body: string;
  mass: number;
}

export interface MarkerDoc {
  name: string;
  body: string;
  offset: Vec3;
}

export interface Skeleton {
  up_axis: string;
  up_index: number;
  joints: JointDoc[];
  children: number[][];
  bodyIndex: Map<string, number>;
}

export interface Character {
  name: string;
  skeleton: Skeleton;
  markers: MarkerDoc[];
  root_position: Vec3[]; // (T, 3)
  root_orientation: Quat[]; // (T, 4)
  joint_rotations: Quat[][]; // (T, J-1, 4)
}

export interface SceneObject {
  name: string;
  markers: MarkerDoc[];
  position: Vec3[];
  orientation: Quat[];
}

export interface MarkerTable {
  names: string[];
  entity_index: number[];
  is_object: boolean[];
}

export interface BodyTrack {
  positions: Vec3[][]; // (T, L, 3)
  orientations: Quat[][]; // (T, L, 4)
  velocities: Vec3[][];
  angular_velocities: Vec3[][];
}

export class Scene {
  readonly fps: number;
  readonly characters: Character[];
  readonly objects: SceneObject[];
  readonly n_frames: number;

  private markerPositionsCache?: Vec3[][];
  private markerVelocitiesCache?: Vec3[][];
  private bodyTracksCache?: BodyTrack[];
  private tposeCache?: Vec3[];

  constructor(fps: number, characters: Character[], objects: SceneObject[]) {
    this.fps = fps;
    this.characters = characters;
    this.objects = objects;
    this.n_frames = characters.length
      ? characters[0].root_position.length
      : objects[0].position.length;
  }

  findCharacter(name: string): Character | undefined {
    return this.characters.find((c) => c.name === name);
  }

  entities(): { name: string; markers: MarkerDoc[] }[] {
    return [...this.characters, ...this.objects];
  }

  markerTable(): MarkerTable {
    const names: string[] = [];
    const entity_index: number[] = [];
    const is_object: boolean[] = [];
    this.entities().forEach((e, ei) => {
      for (const m of e.markers) {
        names.push(m.name);
        entity_index.push(ei);
        is_object.push(ei >= this.characters.length);
      }
    });
    return { names, entity_index, is_object };
  }

  /** World marker positions, frame major: (T, N, 3). */
  markerPositions(): Vec3[][] {
    if (this.markerPositionsCache) return this.markerPositionsCache;
    const T = this.n_frames;
    const frames: Vec3[][] = Array.from({ length: T }, () => []);
    for (const c of this.characters) {
      const jidx = c.markers.map((m) => bodyJoint(c.skeleton, m.body));
      for (let t = 0; t < T; t++) {
        const { positions, orientations } = fkFrame(c, t);
        c.markers.forEach((m, k) => {
          const j = jidx[k];
          frames[t].push(
            q.add(positions[j], q.rotate(orientations[j], m.offset))
          );
        });
      }
    }
    for (const o of this.objects) {
      for (let t = 0; t < T; t++) {
        for (const m of o.markers) {
          frames[t].push(
            q.add(o.position[t], q.rotate(o.orientation[t], m.offset))
          );
        }
      }
    }
    this.markerPositionsCache = frames;
    return frames;
  }

  markerVelocities(): Vec3[][] {
    if (!this.markerVelocitiesCache) {
      this.markerVelocitiesCache = computeVelocities(
        this.markerPositions(),
        this.fps
      );
    }
    return this.markerVelocitiesCache;
  }

  /** Frame-0 marker positions, the calibration table for self edges. */
  tposePositions(): Vec3[] {
    if (!this.tposeCache) this.tposeCache = this.markerPositions()[0];
    return this.tposeCache;
  }

  /** Rigid-body state tracks per entity, characters then objects. */
  bodyTracks(): BodyTrack[] {
    if (this.bodyTracksCache) return this.bodyTracksCache;
    const tracks: BodyTrack[] = [];
    for (const c of this.characters) {
      const positions: Vec3[][] = [];
      const orientations: Quat[][] = [];
      for (let t = 0; t < this.n_frames; t++) {
        const fk = fkFrame(c, t);
        positions.push(fk.positions);
        orientations.push(fk.orientations);
      }
      tracks.push({
        positions,
        orientations,
        velocities: computeVelocities(positions, this.fps),
        angular_velocities: computeAngularVelocities(orientations, this.fps),
      });
    }
    for (const o of this.objects) {
      const positions = o.position.map((p) => [p]);
      const orientations = o.orientation.map((r) => [r]);
      tracks.push({
        positions,
        orientations,
        velocities: computeVelocities(positions, this.fps),
        angular_velocities: computeAngularVelocities(orientations, this.fps),
      });
    }
    this.bodyTracksCache = tracks;
    return tracks;
  }
}

function bodyJoint(sk: Skeleton, body: string): number {
  const i = sk.bodyIndex.get(body);
  if (i === undefined) throw new SchemaError(`unknown body '${body}'`);
  return i;
}

/** Forward kinematics of one character at one frame. */
export function fkFrame(
  c: Character,
  frame: number
): { positions: Vec3[]; orientations: Quat[] } {
  const sk = c.skeleton;
  const J = sk.joints.length;
  const positions: Vec3[] = new Array(J);
  const orientations: Quat[] = new Array(J);
  positions[0] = c.root_position[frame];
  orientations[0] = c.root_orientation[frame];
  const local = c.joint_rotations[frame];
  for (let i = 1; i < J; i++) {
    const p = sk.joints[i].parent as number;
    const rp = orientations[p];
    orientations[i] = q.mul(rp, local[i - 1]);
    positions[i] = q.add(positions[p], q.rotate(rp, sk.joints[i].offset));
  }
  return { positions, orientations };
}

/**
 * Central differences inside the clip, one-sided at both ends; the same
 * stencil the engine uses, so derived velocities agree.
 */
export function computeVelocities(track: Vec3[][], fps: number): Vec3[][] {
  const T = track.length;
  if (T < 2) throw new SchemaError("velocity needs at least two frames");
  const out: Vec3[][] = new Array(T);
  const diff = (a: Vec3[], b: Vec3[], s: number) =>
    a.map((p, i) => q.scale(q.sub(p, b[i]), s));
  out[0] = diff(track[1], track[0], fps);
  out[T - 1] = diff(track[T - 1], track[T - 2], fps);
  for (let t = 1; t < T - 1; t++) {
    out[t] = diff(track[t + 1], track[t - 1], 0.5 * fps);
  }
  return out;
}

export function computeAngularVelocities(
  track: Quat[][],
  fps: number
): Vec3[][] {
  const T = track.length;
  if (T < 2) throw new SchemaError("velocity needs at least two frames");
  const rate = (q0: Quat[], q1: Quat[], dt: number) =>
    q0.map((a, i) => q.scale(q.toRotvec(q.mul(q1[i], q.conj(a))), 1 / dt));
  const dt = 1 / fps;
  const out: Vec3[][] = new Array(T);
  out[0] = rate(track[0], track[1], dt);
  out[T - 1] = rate(track[T - 2], track[T - 1], dt);
  for (let t = 1; t < T - 1; t++) {
    out[t] = rate(track[t - 1], track[t + 1], 2 * dt);
  }
  return out;
}

// -- document parsing ---------------------------------------------------------

function expectArray(v: unknown, where: string): unknown[] {
  if (!Array.isArray(v)) throw new SchemaError(`${where}: expected an array`);
  return v;
}

function vec3(v: unknown, where: string): Vec3 {
  const a = expectArray(v, where);
  if (a.length !== 3 || a.some((x) => typeof x !== "number")) {
    throw new SchemaError(`${where}: expected 3 numbers`);
  }
  return a as Vec3;
}

function quat4(v: unknown, where: string): Quat {
  const a = expectArray(v, where);
  if (a.length !== 4 || a.some((x) => typeof x !== "number")) {
    throw new SchemaError(`${where}: expected 4 numbers`);
  }
  return a as Quat;
}

function parseSkeleton(doc: any, where: string): Skeleton {
  const up_axis = doc.up_axis ?? "y";
  if (!(up_axis in AXES)) throw new SchemaError(`${where}: unknown up axis`);
  const joints: JointDoc[] = expectArray(doc.joints, `${where}.joints`).map(
    (j: any, i) => {
      const name = j.name;
      if (typeof name !== "string") {
        throw new SchemaError(`${where}.joints[${i}]: missing name`);
      }
      const mass = j.mass ?? 1.0;
      if (typeof mass !== "number" || !(mass > 0)) {
        throw new SchemaError(`${where}.joints[${i}]: mass must be positive`);
      }
      // an empty body name aliases the joint name, like the engine does
      return {
        name,
        parent: j.parent ?? null,
        offset: vec3(j.offset, `${where}.joints[${i}].offset`),
        body: j.body || name,
        mass,
      };
    }
  );
  if (!joints.length || joints[0].parent !== null) {
    throw new SchemaError(`${where}: root joint must come first`);
  }
  joints.forEach((j, i) => {
    if (i > 0 && (j.parent === null || j.parent < 0 || j.parent >= i)) {
      throw new SchemaError(`${where}: parent of joint ${i} must precede it`);
    }
  });
  if (new Set(joints.map((j) => j.name)).size !== joints.length) {
    throw new SchemaError(`${where}: joint names must be unique`);
  }
  const children: number[][] = joints.map(() => []);
  joints.forEach((j, i) => {
    if (j.parent !== null) children[j.parent].push(i);
  });
  const bodyIndex = new Map(joints.map((j, i) => [j.body, i]));
  if (bodyIndex.size !== joints.length) {
    throw new SchemaError(`${where}: body names must be unique`);
  }
  return { up_axis, up_index: AXES[up_axis], joints, children, bodyIndex };
}

/**
 * Norms drifting past the slack are data errors; tiny drift from document
 * round-trips is folded back to unit length so downstream math sees the
 * same values the engine does.
 */
function checkQuats(track: Quat[], what: string): Quat[] {
  let worst = 0;
  const norms = track.map((x) => {
    const n = Math.sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3]);
    const off = Math.abs(n - 1.0);
    if (off > worst) worst = off;
    return n;
  });
  if (worst > QUAT_NORM_SLACK) {
    throw new SchemaError(`${what}: quaternion norm off by ${worst.toExponential(3)}`);
  }
  if (worst > 1e-12) {
    return track.map((x, i) => [
      x[0] / norms[i],
      x[1] / norms[i],
      x[2] / norms[i],
      x[3] / norms[i],
    ]);
  }
  return track;
}

function parseMarkers(doc: unknown, where: string): MarkerDoc[] {
  return expectArray(doc, where).map((m: any, i) => ({
    name: m.name,
    body: m.body,
    offset: vec3(m.offset, `${where}[${i}].offset`),
  }));
}

/** One marker per box corner, same bit-pattern order the engine uses. */
function boxMarkers(entity: string, half: Vec3): MarkerDoc[] {
  const out: MarkerDoc[] = [];
  for (let i = 0; i < 8; i++) {
    const sx = i & 4 ? -1 : 1;
    const sy = i & 2 ? -1 : 1;
    const sz = i & 1 ? -1 : 1;
    out.push({
      name: `${entity}:corner_${i}`,
      body: "",
      offset: [sx * half[0], sy * half[1], sz * half[2]],
    });
  }
  return out;
}

export function sceneFromDoc(doc: any): Scene {
  if (typeof doc !== "object" || doc === null) {
    throw new SchemaError("scene document must be an object");
  }
  if (doc.format !== FORMAT_NAME) {
    throw new SchemaError(`unknown format '${doc.format}'`);
  }
  if (doc.version !== FORMAT_VERSION) {
    throw new SchemaError(`unsupported version ${doc.version}`);
  }
  if (typeof doc.fps !== "number" || !(doc.fps > 0)) {
    throw new SchemaError("fps must be a positive number");
  }
  const characters: Character[] = expectArray(
    doc.characters,
    "characters"
  ).map((c: any, ci) => {
    const where = `characters[${ci}]`;
    const skeleton = parseSkeleton(c.skeleton, `${where}.skeleton`);
    const J = skeleton.joints.length;
    const root_position = expectArray(
      c.root_position,
      `${where}.root_position`
    ).map((p, t) => vec3(p, `${where}.root_position[${t}]`));
    const root_orientation = expectArray(
      c.root_orientation,
      `${where}.root_orientation`
    ).map((p, t) => quat4(p, `${where}.root_orientation[${t}]`));
    const joint_rotations = expectArray(
      c.joint_rotations,
      `${where}.joint_rotations`
    ).map((row, t) => {
      const r = expectArray(row, `${where}.joint_rotations[${t}]`);
      if (r.length !== J - 1) {
        throw new SchemaError(
          `${where}.joint_rotations[${t}]: expected ${J - 1} rows, got ${r.length}`
        );
      }
      return r.map((x, k) => quat4(x, `${where}.joint_rotations[${t}][${k}]`));
    });
    if (
      root_orientation.length !== root_position.length ||
      joint_rotations.length !== root_position.length
    ) {
      throw new SchemaError(`${where}: track lengths disagree`);
    }
    const markers = parseMarkers(c.markers, `${where}.markers`);
    for (const m of markers) {
      if (!skeleton.bodyIndex.has(m.body)) {
        throw new SchemaError(`${where}: marker on unknown body '${m.body}'`);
      }
    }
    const flat = checkQuats(
      joint_rotations.flat(),
      `${where}.joint_rotations`
    );
    return {
      name: c.name,
      skeleton,
      markers,
      root_position,
      root_orientation: checkQuats(
        root_orientation,
        `${where}.root_orientation`
      ),
      joint_rotations: joint_rotations.map((row, t) =>
        row.map((_, k) => flat[t * (J - 1) + k])
      ),
    };
  });
  const objects: SceneObject[] = expectArray(doc.objects ?? [], "objects").map(
    (o: any, oi) => {
      const where = `objects[${oi}]`;
      const markers = o.half_extents
        ? boxMarkers(o.name, vec3(o.half_extents, `${where}.half_extents`))
        : parseMarkers(o.markers, `${where}.markers`);
      if (!markers.length) {
        throw new SchemaError(`${where}: object has no markers`);
      }
      const position = expectArray(o.position, `${where}.position`).map(
        (p, t) => vec3(p, `${where}.position[${t}]`)
      );
      const orientation = expectArray(o.orientation, `${where}.orientation`).map(
        (p, t) => quat4(p, `${where}.orientation[${t}]`)
      );
      if (orientation.length !== position.length) {
        throw new SchemaError(`${where}: track lengths disagree`);
      }
      return {
        name: o.name,
        markers,
        position,
        orientation: checkQuats(orientation, `${where}.orientation`),
      };
    }
  );
  if (!characters.length) {
    throw new SchemaError("scene needs at least one character");
  }
  const lengths = [
    ...characters.map((c) => c.root_position.length),
    ...objects.map((o) => o.position.length),
  ];
  if (new Set(lengths).size !== 1) {
    throw new SchemaError("entities disagree on frame count");
  }
  if (lengths[0] < 1) {
    throw new SchemaError("scene must have at least one frame");
  }
  const entityNames = [...characters, ...objects].map((e) => e.name);
  if (new Set(entityNames).size !== entityNames.length) {
    throw new SchemaError("entity names must be unique");
  }
  const markerNames = [...characters, ...objects].flatMap((e) =>
    e.markers.map((m) => m.name)
  );
  if (new Set(markerNames).size !== markerNames.length) {
    throw new SchemaError("marker names must be unique across the scene");
  }
  const scene = new Scene(doc.fps, characters, objects);
  validateTpose(scene);
  return scene;
}

/**
 * Frame 0 normalizes every within-character edge later on, so any marker
 * pair closer than TPOSE_MIN_MARKER_DISTANCE makes the scene unusable.
 */
function validateTpose(scene: Scene): void {
  for (const c of scene.characters) {
    const fk = fkFrame(c, 0);
    const p0 = c.markers.map((m) =>
      q.add(
        fk.positions[c.skeleton.bodyIndex.get(m.body)!],
        q.rotate(fk.orientations[c.skeleton.bodyIndex.get(m.body)!], m.offset)
      )
    );
    for (let i = 0; i < p0.length; i++) {
      for (let j = i + 1; j < p0.length; j++) {
        const d = q.norm(q.sub(p0[i], p0[j]));
        if (d < TPOSE_MIN_MARKER_DISTANCE) {
          throw new SchemaError(
            `character '${c.name}': markers '${c.markers[i].name}' and ` +
              `'${c.markers[j].name}' are ${d.toExponential(2)} m apart at ` +
              `frame 0; the calibration pose cannot normalize their edge`
          );
        }
      }
    }
  }
}

export function loadScene(text: string): Scene {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (e) {
    throw new SchemaError(`not valid JSON: ${(e as Error).message}`);
  }
  return sceneFromDoc(doc);
}
