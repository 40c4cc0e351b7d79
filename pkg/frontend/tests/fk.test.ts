/** Client FK must match the server-exported test vectors within 1e-6. */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { boneSegments, forwardKinematics } from "../src/fk.js";
import type { Quat, Vec3 } from "../src/fk.js";
import type { SkeletonDescription } from "../src/protocol.js";

interface FkCase {
  root_position: Vec3;
  root_quaternion: Quat;
  q: number[];
  link_positions: Vec3[];
}

interface FkFixture {
  skeleton: SkeletonDescription;
  cases: FkCase[];
}

const here = dirname(fileURLToPath(import.meta.url));

function loadFixture(name: string): FkFixture {
  return JSON.parse(readFileSync(join(here, "..", "test-fixtures", name), "utf-8"));
}

describe.each(["fk_vectors_29dof.json", "fk_vectors_5dof.json"])("%s", (file) => {
  const fixture = loadFixture(file);

  it("matches every exported link position within 1e-6", () => {
    expect(fixture.cases.length).toBeGreaterThan(0);
    let worst = 0;
    for (const c of fixture.cases) {
      const pose = forwardKinematics(fixture.skeleton, c.root_position, c.root_quaternion, c.q);
      expect(pose.positions.length).toBe(c.link_positions.length);
      for (let link = 0; link < pose.positions.length; link += 1) {
        for (let axis = 0; axis < 3; axis += 1) {
          worst = Math.max(
            worst,
            Math.abs(pose.positions[link][axis] - c.link_positions[link][axis]),
          );
        }
      }
    }
    expect(worst).toBeLessThanOrEqual(1e-6);
  });

  it("rejects mismatched joint counts", () => {
    const c = fixture.cases[0];
    expect(() =>
      forwardKinematics(fixture.skeleton, c.root_position, c.root_quaternion, c.q.slice(1)),
    ).toThrow();
  });

  it("derives one bone per joint", () => {
    const segments = boneSegments(fixture.skeleton);
    expect(segments.length).toBe(fixture.skeleton.joint_names.length);
    for (const [parent, child] of segments) {
      expect(parent).toBeGreaterThanOrEqual(0);
      expect(child).toBeGreaterThan(0);
    }
  });
});
