struct Robot {
    int x;
    int y;
    char direction;
};

void turn_left(struct Robot *robot) {
    switch (robot->direction) {
        case 'N': robot->direction = 'W'; break;
        case 'W': robot->direction = 'S'; break;
        case 'S': robot->direction = 'E'; break;
        case 'E': robot->direction = 'N'; break;
    }
}

void turn_right(struct Robot *robot) {
    switch (robot->direction) {
        case 'N': robot->direction = 'E'; break;
        case 'E': robot->direction = 'S'; break;
        case 'S': robot->direction = 'W'; break;
        case 'W': robot->direction = 'N'; break;
    }
}

void move_forward(struct Robot *robot, int grid_size) {
    int x = robot->x;
    int y = robot->y;
    switch (robot->direction) {
        case 'N': y++; break;
        case 'S': y--; break;
        case 'E': x++; break;
        case 'W': x--; break;
    }
    if (x >= 0 && x < grid_size && y >= 0 && y < grid_size) {
        robot->x = x;
        robot->y = y;
    }
}

void run_commands(struct Robot *robot, const char *commands, int grid_size) {
    for (; *commands; commands++) {
        if (*commands == 'L') turn_left(robot);
        else if (*commands == 'R') turn_right(robot);
        else if (*commands == 'F') move_forward(robot, grid_size);
    }
}
