/**
 * Client-side forward kinematics, mirroring the server contract exactly:
 * scalar-first quaternions with the Hamilton product; link i+1 is oriented
 * parent * rot(axis_i, q_i) and positioned at parent + R_child * offset_i.
 *
 * The skeleton description arrives in the server's hello message, so
 * geometry is never bundled with the client.
 */

import type { SkeletonDescription } from "./protocol.js";

export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number]; // (w, x, y, z)

export function quatMultiply(a: Quat, b: Quat): Quat {
  const [aw, ax, ay, az] = a;
  const [bw, bx, by, bz] = b;
  return [
    aw * bw - ax * bx - ay * by - az * bz,
    aw * bx + ax * bw + ay * bz - az * by,
    aw * by - ax * bz + ay * bw + az * bx,
    aw * bz + ax * by - ay * bx + az * bw,
  ];
}

export function quatRotate(q: Quat, v: Vec3): Vec3 {
  const [, x, y, z] = q;
  const w = q[0];
  // v + 2 w (u x v) + 2 (u x (u x v))
  const tx = 2 * (y * v[2] - z * v[1]);
  const ty = 2 * (z * v[0] - x * v[2]);
  const tz = 2 * (x * v[1] - y * v[0]);
  return [
    v[0] + w * tx + (y * tz - z * ty),
    v[1] + w * ty + (z * tx - x * tz),
    v[2] + w * tz + (x * ty - y * tx),
  ];
}

export function quatFromAxisAngle(axis: Vec3, angle: number): Quat {
  const half = angle / 2;
  const s = Math.sin(half);
  return [Math.cos(half), s * axis[0], s * axis[1], s * axis[2]];
}

export interface BodyPose {
  positions: Vec3[]; // n_q + 1 entries; index 0 is the root link
  orientations: Quat[];
}

export function forwardKinematics(
  skeleton: SkeletonDescription,
  rootPosition: Vec3,
  rootOrientation: Quat,
  q: number[],
): BodyPose {
  const n = skeleton.joint_names.length;
  if (q.length !== n) {
    throw new Error(`expected ${n} joint angles, got ${q.length}`);
  }
  const positions: Vec3[] = [rootPosition];
  const orientations: Quat[] = [rootOrientation];
  for (let i = 0; i < n; i += 1) {
    const parent = skeleton.parents[i] + 1;
    const spin = quatFromAxisAngle(skeleton.axes[i], q[i]);
    const childRot = quatMultiply(orientations[parent], spin);
    const offset = quatRotate(childRot, skeleton.offsets[i]);
    const parentPos = positions[parent];
    positions.push([
      parentPos[0] + offset[0],
      parentPos[1] + offset[1],
      parentPos[2] + offset[2],
    ]);
    orientations.push(childRot);
  }
  return { positions, orientations };
}

/** Bone segments as [parentLinkIndex, childLinkIndex] pairs for drawing. */
export function boneSegments(skeleton: SkeletonDescription): [number, number][] {
  return skeleton.parents.map((p, i) => [p + 1, i + 1]);
}
