"""Print the aggregate of two strongly convex samples and its stationary points."""

from tvqp.recipes import nonconvexity_demo

if __name__ == "__main__":
    print(nonconvexity_demo())
